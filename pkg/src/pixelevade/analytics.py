"""Attack metrics: lifetime success rate, average actions to fool, the
per-class best-scenario analysis with its threshold rule, and log/CSV export.
"""

import csv
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

from .oracle import Scenario

NO_CLEAR_BEST = "no-clear-best"
SCENARIO_ORDER = [s.value for s in Scenario]

# Comparison slack so a margin of exactly t (e.g. 0.80 vs 0.79 at t=0.01)
# counts as a clear best despite float rounding of the ratios.
_MARGIN_EPS = 1e-12


@dataclass
class EpisodeRecord:
    episode_index: int
    class_label: int
    scenario: str
    fooled: bool
    steps_used: int
    episode_return: float
    query_count_delta: int
    wall_env_steps: int

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            episode_index=int(d["episode_index"]),
            class_label=int(d["class_label"]),
            scenario=str(d["scenario"]),
            fooled=bool(d["fooled"]),
            steps_used=int(d["steps_used"]),
            episode_return=float(d["episode_return"]),
            query_count_delta=int(d["query_count_delta"]),
            wall_env_steps=int(d["wall_env_steps"]),
        )


@dataclass
class MetricsCell:
    episodes: int = 0
    successes: int = 0
    aaf_total: int = 0

    @property
    def lsr(self):
        return self.successes / self.episodes if self.episodes else None

    @property
    def aaf(self):
        """Mean steps over successful episodes; None when there are none."""
        return self.aaf_total / self.successes if self.successes else None


@dataclass
class AnalysisConfig:
    threshold: float = 0.01

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


def lifetime_success_rate(records):
    """Cumulative successes/attempts; returns (final, per-episode curve).

    An empty record set has no defined rate: returns (None, [])."""
    if not records:
        return None, []
    curve = []
    successes = 0
    for i, rec in enumerate(records):
        successes += 1 if rec.fooled else 0
        curve.append(successes / (i + 1))
    return curve[-1], curve


def average_actions_to_fool(records):
    """Mean steps_used over fooled episodes only; None when no successes."""
    steps = [r.steps_used for r in records if r.fooled]
    if not steps:
        return None
    return sum(steps) / len(steps)


def compute_metrics(records):
    """Per (scenario, class) episode/success counts feeding LSR and AAF."""
    table = {}
    for rec in records:
        cell = table.setdefault((rec.scenario, rec.class_label), MetricsCell())
        cell.episodes += 1
        if rec.fooled:
            cell.successes += 1
            cell.aaf_total += rec.steps_used
    return table


def best_scenario_per_class(metrics, config):
    """Per class: the unique scenario whose LSR beats every other scenario's
    by at least the threshold, else the no-clear-best bucket. With t = 0 this
    degenerates to argmax with lowest-scenario-index tie-break. Classes
    missing any scenario are skipped with a warning."""
    classes = sorted({cls for _, cls in metrics})
    result = {}
    for cls in classes:
        lsrs = {}
        for name in SCENARIO_ORDER:
            cell = metrics.get((name, cls))
            if cell is None or cell.episodes == 0:
                break
            lsrs[name] = cell.lsr
        if len(lsrs) < len(SCENARIO_ORDER):
            warnings.warn(f"class {cls}: missing scenario data, skipped")
            continue
        winner = NO_CLEAR_BEST
        for name in SCENARIO_ORDER:
            others = [lsrs[o] for o in SCENARIO_ORDER if o != name]
            if all(lsrs[name] - o >= config.threshold - _MARGIN_EPS for o in others):
                winner = name
                break
        result[cls] = winner
    return result


def scenario_count_summary(best_map):
    """Counts and percentages per bucket (all four scenarios plus
    no-clear-best, zeros listed explicitly); counts sum to the class total."""
    total = len(best_map)
    buckets = SCENARIO_ORDER + [NO_CLEAR_BEST]
    summary = {}
    for bucket in buckets:
        count = sum(1 for v in best_map.values() if v == bucket)
        summary[bucket] = {
            "count": count,
            "percentage": 100.0 * count / total if total else 0.0,
        }
    return summary


def write_episode_jsonl(path, records, header=None):
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"type": "header", **header}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_episode_jsonl(path):
    """Returns (records, header-or-None); tolerates logs without a header."""
    records = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                header = obj
                continue
            records.append(EpisodeRecord.from_dict(obj))
    return records, header


def append_episode_jsonl(fh, record):
    """Write one record line and flush, keeping interrupted logs parseable."""
    fh.write(json.dumps(record.to_dict()) + "\n")
    fh.flush()


def write_metrics_csv(path, metrics):
    scenarios = sorted({s for s, _ in metrics},
                       key=lambda s: (SCENARIO_ORDER.index(s)
                                      if s in SCENARIO_ORDER else len(SCENARIO_ORDER)))
    classes = sorted({c for _, c in metrics})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "class", "episodes", "successes", "lsr", "aaf"])
        for scenario in scenarios:
            for cls in classes:
                cell = metrics.get((scenario, cls), MetricsCell())
                lsr = "" if cell.lsr is None else repr(cell.lsr)
                aaf = "" if cell.aaf is None else repr(cell.aaf)
                writer.writerow([scenario, cls, cell.episodes, cell.successes,
                                 lsr, aaf])


def write_plot_data(out_dir, records):
    """Per (scenario, class) running-LSR curve CSVs for external plotting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = {}
    for rec in records:
        groups.setdefault((rec.scenario, rec.class_label), []).append(rec)
    paths = []
    for (scenario, cls), group in sorted(groups.items(),
                                         key=lambda kv: (kv[0][0], kv[0][1])):
        _, curve = lifetime_success_rate(group)
        path = out_dir / f"lsr_{scenario}_class{cls}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode_index", "running_lsr"])
            for rec, value in zip(group, curve):
                writer.writerow([rec.episode_index, repr(value)])
        paths.append(path)
    return paths


def export_results(records, metrics, out_dir, config=None):
    """Write the episode log, metrics CSV, best-scenario JSON summary, and
    plot-data CSVs under out_dir; returns the written paths."""
    config = config or AnalysisConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    episodes_path = out_dir / "episodes.jsonl"
    write_episode_jsonl(episodes_path, records)

    metrics_path = out_dir / "metrics.csv"
    write_metrics_csv(metrics_path, metrics)

    best = best_scenario_per_class(metrics, config)
    summary = scenario_count_summary(best)
    best_path = out_dir / "best_scenarios.json"
    with open(best_path, "w") as fh:
        json.dump({
            "threshold": config.threshold,
            "per_class": {str(c): v for c, v in best.items()},
            "summary": summary,
        }, fh, indent=2)
        fh.write("\n")

    plot_paths = write_plot_data(out_dir / "plot_data", records)
    return [episodes_path, metrics_path, best_path, *plot_paths]
