"""Command-line orchestration: config loading, seed derivation, and the
train-classifier / attack / analyze / plot-data subcommands.

All component seeds derive from one master seed at fixed offsets; the
environment seeds are master..master+3, so the default master seed of 42
assigns the four parallel environments seeds 42-45.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .analytics import (AnalysisConfig, NO_CLEAR_BEST, append_episode_jsonl,
                        best_scenario_per_class, compute_metrics,
                        export_results, read_episode_jsonl,
                        scenario_count_summary, write_metrics_csv,
                        write_plot_data)
from .classifier import load_model, save_model, train_classifier
from .dataset import CorpusConfig, generate_corpus
from .oracle import DefenseConfig, Scenario
from .ppo import PpoConfig, train_attacker

# Seed offsets from the master seed; environments use master+0..master+N-1.
OFFSET_CORPUS = 100
OFFSET_CLASSIFIER = 200


class ConfigError(ValueError):
    pass


@dataclass
class ClassifierTrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class RunConfig:
    master_seed: int
    out_dir: Path
    corpus: CorpusConfig
    classifier: ClassifierTrainConfig
    scenario: Scenario
    defense: DefenseConfig
    ppo: PpoConfig
    serial: bool = True
    attack_split: str = "train"

    def __post_init__(self):
        if self.attack_split not in ("train", "test"):
            raise ValueError("attack_split must be 'train' or 'test'")


def _build_section(section, cls, data):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def load_run_config(path=None, overrides=None):
    """Parse the JSON run config (all sections optional) and apply CLI
    overrides. Any invalid field is reported with its section name."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"master_seed", "out_dir", "corpus", "classifier", "scenario",
             "defense", "ppo", "serial", "attack_split"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")

    overrides = overrides or {}
    master_seed = int(raw.get("master_seed", 42))

    corpus_dict = dict(raw.get("corpus", {}))
    corpus_dict.setdefault("seed", master_seed + OFFSET_CORPUS)
    corpus = _build_section("corpus", CorpusConfig, corpus_dict)

    classifier_cfg = _build_section("classifier", ClassifierTrainConfig,
                                    dict(raw.get("classifier", {})))

    scenario_name = overrides.get("scenario") or raw.get("scenario", "black-box")
    try:
        scenario = Scenario.from_name(scenario_name)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc

    defense = _build_section("defense", DefenseConfig, dict(raw.get("defense", {})))

    ppo_dict = dict(raw.get("ppo", {}))
    if "num_envs" not in ppo_dict and "env_seeds" in ppo_dict:
        ppo_dict["num_envs"] = len(ppo_dict["env_seeds"])
    num_envs = int(ppo_dict.get("num_envs", 4))
    ppo_dict.setdefault("env_seeds", [master_seed + i for i in range(num_envs)])
    if overrides.get("total_steps") is not None:
        ppo_dict["total_env_steps"] = overrides["total_steps"]
    ppo = _build_section("ppo", PpoConfig, ppo_dict)

    out_dir = Path(overrides.get("out") or raw.get("out_dir", "runs/default"))
    serial = bool(raw.get("serial", True)) or bool(overrides.get("serial"))
    return RunConfig(
        master_seed=master_seed,
        out_dir=out_dir,
        corpus=corpus,
        classifier=classifier_cfg,
        scenario=scenario,
        defense=defense,
        ppo=ppo,
        serial=serial,
        attack_split=str(raw.get("attack_split", "train")),
    )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_train_classifier(config):
    config.out_dir.mkdir(parents=True, exist_ok=True)
    train, test = generate_corpus(config.corpus)
    model, report = train_classifier(
        train, test,
        epochs=config.classifier.epochs,
        batch_size=config.classifier.batch_size,
        seed=config.master_seed + OFFSET_CLASSIFIER,
        learning_rate=config.classifier.learning_rate,
    )
    ckpt_path = config.out_dir / "classifier.evnn"
    save_model(ckpt_path, model)
    report_path = config.out_dir / "train_report.json"
    report_path.write_text(report.to_json() + "\n")
    print(f"classifier: train acc {report.final_train_accuracy:.4f}, "
          f"test acc {report.final_test_accuracy:.4f} "
          f"({report.epochs_run} epochs)")
    print(f"wrote {ckpt_path} and {report_path}")
    return 0


def cmd_attack(config):
    ckpt_path = config.out_dir / "classifier.evnn"
    if not ckpt_path.exists():
        print(f"error: classifier checkpoint {ckpt_path} not found; "
              f"run train-classifier first", file=sys.stderr)
        return 1
    model = load_model(ckpt_path)
    train, test = generate_corpus(config.corpus)
    corpus = train if config.attack_split == "train" else test

    scenario = config.scenario
    log_path = config.out_dir / f"episodes_{scenario.value}.jsonl"
    policy_path = config.out_dir / f"policy_{scenario.value}.evnn"
    header = {
        "scenario": scenario.value,
        "class_count": model.class_count,
        "master_seed": config.master_seed,
        "total_env_steps": config.ppo.total_env_steps,
        "classifier_sha256": _sha256(ckpt_path),
    }
    with open(log_path, "w") as log_fh:
        log_fh.write(json.dumps({"type": "header", **header}) + "\n")
        log_fh.flush()
        _, records, _ = train_attacker(
            model, corpus, scenario, config.ppo,
            defense=config.defense,
            seed=config.master_seed,
            record_sink=lambda rec: append_episode_jsonl(log_fh, rec),
            progress_fn=lambda line: print(json.dumps(line), flush=True),
            checkpoint_path=policy_path,
            serial=config.serial,
        )
    successes = sum(1 for r in records if r.fooled)
    lsr = successes / len(records) if records else float("nan")
    print(f"attack [{scenario.value}]: {len(records)} episodes, "
          f"lifetime success rate {lsr:.4f}")
    print(f"wrote {log_path} and {policy_path}")
    return 0


def _load_logs(paths):
    all_records = []
    class_counts = set()
    for path in paths:
        records, header = read_episode_jsonl(path)
        if not records:
            print(f"error: no episode records in {path}", file=sys.stderr)
            return None, None
        if header and "class_count" in header:
            class_counts.add(int(header["class_count"]))
        all_records.extend(records)
    if len(class_counts) > 1:
        print(f"error: inconsistent class counts across logs: "
              f"{sorted(class_counts)}", file=sys.stderr)
        return None, None
    class_count = class_counts.pop() if class_counts else None
    return all_records, class_count


def cmd_analyze(log_paths, out_dir, threshold):
    records, _ = _load_logs(log_paths)
    if records is None:
        return 1
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis = AnalysisConfig(threshold=threshold)
    metrics = compute_metrics(records)

    write_metrics_csv(out_dir / "metrics.csv", metrics)
    best = best_scenario_per_class(metrics, analysis)
    summary = scenario_count_summary(best)
    with open(out_dir / "best_scenarios.json", "w") as fh:
        json.dump({
            "threshold": analysis.threshold,
            "per_class": {str(c): v for c, v in best.items()},
            "summary": summary,
        }, fh, indent=2)
        fh.write("\n")
    write_plot_data(out_dir / "plot_data", records)

    print(f"best-scenario counts over {len(best)} classes (t = {threshold}):")
    for name, entry in summary.items():
        print(f"  {name:20s} {entry['count']:3d} classes ({entry['percentage']:.1f}%)")
    print(f"wrote {out_dir / 'metrics.csv'}, {out_dir / 'best_scenarios.json'}, "
          f"{out_dir / 'plot_data'}/")
    return 0


def cmd_plot_data(log_paths, out_dir):
    records, _ = _load_logs(log_paths)
    if records is None:
        return 1
    paths = write_plot_data(Path(out_dir) / "plot_data", records)
    print(f"wrote {len(paths)} plot-data files under {Path(out_dir) / 'plot_data'}/")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pixelevade",
        description="RL pixel-evasion attacks against a CNN under four "
                    "confidence-disclosure scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON run config (defaults used if omitted)")
    common.add_argument("--out", type=Path, default=None,
                        help="output directory (overrides config out_dir)")

    sub.add_parser("train-classifier", parents=[common],
                   help="generate the corpus and train/save the target CNN")

    attack = sub.add_parser("attack", parents=[common],
                            help="train the PPO attacker under one scenario")
    attack.add_argument("--scenario",
                        choices=[s.value for s in Scenario], default=None,
                        help="disclosure scenario (overrides config)")
    attack.add_argument("--total-steps", type=int, default=None,
                        help="override ppo.total_env_steps")
    attack.add_argument("--serial", action="store_true",
                        help="force single-threaded, bit-reproducible collection")

    analyze = sub.add_parser("analyze", parents=[common],
                             help="compute metrics and the best-scenario table")
    analyze.add_argument("logs", nargs="+", type=Path,
                         help="episode JSONL logs (one or more scenarios)")
    analyze.add_argument("--threshold", type=float, default=0.01,
                         help="best-scenario margin t (default 0.01)")

    plot = sub.add_parser("plot-data", parents=[common],
                          help="export running-LSR curves as CSV")
    plot.add_argument("logs", nargs="+", type=Path)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train-classifier":
            config = load_run_config(args.config, {"out": args.out})
            return cmd_train_classifier(config)
        if args.command == "attack":
            config = load_run_config(args.config, {
                "out": args.out,
                "scenario": args.scenario,
                "total_steps": args.total_steps,
                "serial": args.serial,
            })
            return cmd_attack(config)
        if args.command == "analyze":
            out_dir = args.out
            if out_dir is None:
                config = load_run_config(args.config, {})
                out_dir = config.out_dir
            return cmd_analyze(args.logs, out_dir, args.threshold)
        if args.command == "plot-data":
            out_dir = args.out
            if out_dir is None:
                config = load_run_config(args.config, {})
                out_dir = config.out_dir
            return cmd_plot_data(args.logs, out_dir)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
