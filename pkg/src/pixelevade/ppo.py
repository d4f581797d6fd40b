"""From-scratch PPO attacker: actor-critic networks, rollout collection,
generalized advantage estimation, and the clipped-surrogate update.

Loss bookkeeping runs in float64 on top of the float32 networks; gradients
are cast back to float32 before backpropagation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytics import EpisodeRecord
from .env import ACTION_COUNT, EvasionEnv, episode_return, observation_size
from .nn import AdamState, adam_step, sequential
from .nn.checkpoint import network_entries, read_container, write_container

_AC_MAGIC = "EVAC"


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 2048
    minibatch_size: int = 256
    update_epochs: int = 10
    value_coef: float = 0.5
    num_envs: int = 4
    env_seeds: tuple = (42, 43, 44, 45)
    total_env_steps: int = 500_000
    checkpoint_interval: int = 10  # updates between periodic checkpoints

    def __post_init__(self):
        self.env_seeds = tuple(self.env_seeds)
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in (0, 1]")
        if self.num_envs != len(self.env_seeds):
            raise ValueError("num_envs must equal the number of env_seeds")
        if self.rollout_length < 1 or self.minibatch_size < 1:
            raise ValueError("rollout_length and minibatch_size must be >= 1")
        if self.update_epochs < 1 or self.total_env_steps < 1:
            raise ValueError("update_epochs and total_env_steps must be >= 1")


class ActorCritic:
    """Shared dense trunk (512/relu/256/relu) with a policy head over the
    full action grid and a scalar value head."""

    def __init__(self, obs_dim, action_count=ACTION_COUNT, rng=None,
                 _build=True):
        self.obs_dim = obs_dim
        self.action_count = action_count
        if not _build:
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.trunk = sequential([
            ("dense", obs_dim, 512), ("relu",),
            ("dense", 512, 256), ("relu",),
        ], rng)
        self.policy_head = sequential([("dense", 256, action_count)], rng)
        self.value_head = sequential([("dense", 256, 1)], rng)

    def forward(self, obs, cache=False):
        """Returns (logits (N, A) float32, values (N,) float32)."""
        hidden = self.trunk.forward(obs, cache=cache)
        logits = self.policy_head.forward(hidden, cache=cache)
        values = self.value_head.forward(hidden, cache=cache)[:, 0]
        return logits, values

    def backward(self, dlogits, dvalues):
        dhidden = self.policy_head.backward(dlogits)
        dhidden = dhidden + self.value_head.backward(dvalues[:, None])
        return self.trunk.backward(dhidden)

    def parameters(self):
        return (self.trunk.parameters() + self.policy_head.parameters()
                + self.value_head.parameters())

    def gradients(self):
        return (self.trunk.gradients() + self.policy_head.gradients()
                + self.value_head.gradients())

    def zero_grads(self):
        self.trunk.zero_grads()
        self.policy_head.zero_grads()
        self.value_head.zero_grads()

    def copy(self, dtype=None):
        ac = ActorCritic(self.obs_dim, self.action_count, _build=False)
        ac.trunk = self.trunk.copy(dtype)
        ac.policy_head = self.policy_head.copy(dtype)
        ac.value_head = self.value_head.copy(dtype)
        return ac

    def save(self, path):
        entries = (network_entries(self.trunk)
                   + network_entries(self.policy_head)
                   + network_entries(self.value_head))
        write_container(path, _AC_MAGIC, entries)

    @classmethod
    def load(cls, path):
        from .nn.checkpoint import network_from_entries
        entries = read_container(path, _AC_MAGIC)
        trunk = network_from_entries(entries[:-2])
        policy_head = network_from_entries(entries[-2:-1])
        value_head = network_from_entries(entries[-1:])
        ac = cls(trunk.layers[0].in_features,
                 policy_head.layers[0].out_features, _build=False)
        ac.trunk = trunk
        ac.policy_head = policy_head
        ac.value_head = value_head
        return ac


def _log_softmax_and_probs(logits64):
    z = logits64 - logits64.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    return z - np.log(s), e / s


@dataclass
class RolloutBatch:
    """Aligned (steps, envs) arrays from one collection phase; advantages and
    returns are filled by compute_gae before any update touches the batch."""
    observations: np.ndarray  # (T, N, D) float32
    actions: np.ndarray       # (T, N) int64
    log_probs_old: np.ndarray  # (T, N) float64
    rewards: np.ndarray       # (T, N) float64
    values: np.ndarray        # (T, N) float64
    dones: np.ndarray         # (T, N) bool
    bootstrap_values: np.ndarray  # (N,) float64
    advantages: np.ndarray = None
    returns: np.ndarray = None

    def __len__(self):
        return self.observations.shape[0] * self.observations.shape[1]

    def flat(self):
        t, n, d = self.observations.shape
        return (
            self.observations.reshape(t * n, d),
            self.actions.reshape(t * n),
            self.log_probs_old.reshape(t * n),
            self.advantages.reshape(t * n),
            self.returns.reshape(t * n),
        )


@dataclass
class MiniBatch:
    observations: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def compute_gae(rewards, values, dones, gamma, gae_lambda, bootstrap_values):
    """delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t);
    A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}; returns = A + V.

    All arrays are (T, N); bootstrap_values supplies V(s_{T}) for rollouts
    truncated mid-episode."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    t_len = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1], dtype=np.float64)
    for t in reversed(range(t_len)):
        nonterminal = 1.0 - dones[t].astype(np.float64)
        next_values = bootstrap_values if t == t_len - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        last = delta + gamma * gae_lambda * nonterminal * last
        advantages[t] = last
    return advantages, advantages + values


def ppo_loss(batch, ac, config, compute_grads=False):
    """Clipped-surrogate loss on one minibatch.

    total = policy_term + value_coef * value_mse - entropy_coef * entropy,
    where the policy term is the negated mean of
    min(r*A, clip(r, 1-eps, 1+eps)*A) and r = exp(logpi_new - logpi_old).

    Returns (total, stats); with compute_grads=True also backpropagates into
    the actor-critic's gradient buffers (caller zeroes them beforehand).
    """
    obs = batch.observations
    n = obs.shape[0]
    rows = np.arange(n)
    logits32, values32 = ac.forward(obs, cache=compute_grads)
    if not np.all(np.isfinite(logits32)):
        raise RuntimeError("policy logits became non-finite")
    logp_all, probs = _log_softmax_and_probs(logits32.astype(np.float64))
    values = values32.astype(np.float64)

    log_probs_new = logp_all[rows, batch.actions]
    ratio = np.exp(log_probs_new - batch.log_probs_old)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - config.clip_epsilon,
                      1.0 + config.clip_epsilon) * adv
    objective = np.minimum(unclipped, clipped)
    policy_term = -objective.mean()

    value_err = values - batch.returns
    value_loss = np.mean(value_err ** 2)
    entropy_per = -np.sum(probs * logp_all, axis=1)
    entropy = entropy_per.mean()
    total = policy_term + config.value_coef * value_loss - config.entropy_coef * entropy
    stats = {
        "policy_term": float(policy_term),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_epsilon)),
        "objective": objective,
        "ratio": ratio,
    }

    if compute_grads:
        # d(min)/d r follows the unclipped branch on ties; the clipped branch
        # has zero derivative whenever it is strictly smaller.
        active = (unclipped <= clipped).astype(np.float64)
        coeff = -(active * ratio * adv) / n
        dlogits = probs * (-coeff[:, None])
        dlogits[rows, batch.actions] += coeff
        dlogits += (config.entropy_coef / n) * probs * (logp_all + entropy_per[:, None])
        dvalues = (2.0 * config.value_coef / n) * value_err
        dtype = logits32.dtype  # float32 in production, float64 in FD tests
        ac.backward(dlogits.astype(dtype), dvalues.astype(dtype))
    return float(total), stats


def sample_actions(logp_all, rng):
    """Categorical draw per row from log-probabilities."""
    probs = np.exp(logp_all)
    actions = np.empty(probs.shape[0], dtype=np.int64)
    for i in range(probs.shape[0]):
        cdf = np.cumsum(probs[i])
        actions[i] = min(int(np.searchsorted(cdf, rng.random(), side="right")),
                         probs.shape[1] - 1)
    return actions


class _EpisodeTracker:
    """Per-env bookkeeping turning finished episodes into EpisodeRecords."""

    def __init__(self, scenario_name):
        self.scenario_name = scenario_name
        self.episode_index = 0
        self.wall_env_steps = 0
        self.records = []

    def start(self, env):
        return env.oracle.query_count

    def finish(self, env, queries_at_start, sink=None):
        state = env.state
        record = EpisodeRecord(
            episode_index=self.episode_index,
            class_label=state.true_label,
            scenario=self.scenario_name,
            fooled=state.last_response.predicted_label != state.true_label,
            steps_used=state.steps_taken,
            episode_return=episode_return(state.rewards),
            query_count_delta=env.oracle.query_count - queries_at_start,
            wall_env_steps=self.wall_env_steps,
        )
        self.episode_index += 1
        self.records.append(record)
        if sink is not None:
            sink(record)
        return record


def collect_rollouts(envs, ac, config, agent_rng, tracker, current_obs,
                     queries_at_start, record_sink=None, executor=None):
    """Run rollout_length synchronized steps across the envs.

    current_obs and queries_at_start are per-env carry-over state (mutated in
    place) so episodes span rollout boundaries. Finished episodes auto-reset
    and are emitted through the tracker."""
    n_envs = len(envs)
    t_len = config.rollout_length
    obs_dim = envs[0].observation_size
    batch = RolloutBatch(
        observations=np.zeros((t_len, n_envs, obs_dim), dtype=np.float32),
        actions=np.zeros((t_len, n_envs), dtype=np.int64),
        log_probs_old=np.zeros((t_len, n_envs), dtype=np.float64),
        rewards=np.zeros((t_len, n_envs), dtype=np.float64),
        values=np.zeros((t_len, n_envs), dtype=np.float64),
        dones=np.zeros((t_len, n_envs), dtype=bool),
        bootstrap_values=np.zeros(n_envs, dtype=np.float64),
    )
    for t in range(t_len):
        obs_mat = np.stack(current_obs)
        logits32, values32 = ac.forward(obs_mat, cache=False)
        if not np.all(np.isfinite(logits32)):
            raise RuntimeError("policy logits became non-finite during rollout")
        logp_all, _ = _log_softmax_and_probs(logits32.astype(np.float64))
        actions = sample_actions(logp_all, agent_rng)

        if executor is not None:
            outcomes = list(executor.map(lambda ea: ea[0].step(ea[1]),
                                         zip(envs, actions)))
        else:
            outcomes = [env.step(a) for env, a in zip(envs, actions)]

        batch.observations[t] = obs_mat
        batch.actions[t] = actions
        batch.log_probs_old[t] = logp_all[np.arange(n_envs), actions]
        batch.values[t] = values32.astype(np.float64)
        for i, (env, outcome) in enumerate(zip(envs, outcomes)):
            tracker.wall_env_steps += 1
            batch.rewards[t, i] = outcome.reward
            batch.dones[t, i] = outcome.done
            if outcome.done:
                tracker.finish(env, queries_at_start[i], record_sink)
                queries_at_start[i] = tracker.start(env)
                current_obs[i] = env.reset()
            else:
                current_obs[i] = outcome.observation

    _, bootstrap = ac.forward(np.stack(current_obs), cache=False)
    batch.bootstrap_values[:] = bootstrap.astype(np.float64)
    return batch


def normalize_advantages(advantages):
    """Affine per-batch rescale to mean 0 / std 1 (sign-preserving when the
    std is nonzero)."""
    flat = advantages.reshape(-1)
    return (flat - flat.mean()) / (flat.std() + 1e-8)


def ppo_update(batch, ac, adam_state, config, shuffle_rng):
    """update_epochs passes of shuffled minibatches over the batch.

    Advantages are normalized to mean 0 / std 1 once per update. Aborts on a
    non-finite loss. Returns mean stats over all minibatches."""
    norm = normalize_advantages(batch.advantages)

    obs, actions, logp_old, _, ret_flat = batch.flat()
    total_n = len(norm)
    stats_acc = {"policy_term": 0.0, "value_loss": 0.0, "entropy": 0.0,
                 "clip_fraction": 0.0}
    passes = 0
    for _ in range(config.update_epochs):
        order = shuffle_rng.permutation(total_n)
        for start in range(0, total_n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            mb = MiniBatch(
                observations=obs[idx],
                actions=actions[idx],
                log_probs_old=logp_old[idx],
                advantages=norm[idx],
                returns=ret_flat[idx],
            )
            ac.zero_grads()
            total, stats = ppo_loss(mb, ac, config, compute_grads=True)
            if not np.isfinite(total):
                raise RuntimeError(f"PPO loss became non-finite: {total}")
            adam_step(ac, adam_state)
            for key in stats_acc:
                stats_acc[key] += stats[key]
            passes += 1
    return {key: value / passes for key, value in stats_acc.items()}


def train_attacker(model, corpus, scenario, config, defense=None, seed=42,
                   record_sink=None, progress_fn=None, checkpoint_path=None,
                   serial=True):
    """Alternate rollout collection and PPO updates until total_env_steps.

    Env sampling rngs use config.env_seeds directly; the oracle, policy-init,
    action-sampling, and shuffle rngs derive from the master seed at fixed
    offsets. Returns (actor_critic, episode records, final stats)."""
    envs = [EvasionEnv(corpus, model, scenario,
                       rng=np.random.default_rng(config.env_seeds[i]),
                       defense=defense,
                       oracle_rng=np.random.default_rng(seed + 400 + i))
            for i in range(config.num_envs)]
    init_rng = np.random.default_rng(seed + 300)
    agent_rng = np.random.default_rng(seed + 500)
    shuffle_rng = np.random.default_rng(seed + 600)

    ac = ActorCritic(envs[0].observation_size, ACTION_COUNT, rng=init_rng)
    adam_state = AdamState(ac, learning_rate=config.learning_rate)
    tracker = _EpisodeTracker(scenario.value)

    executor = None
    if not serial and config.num_envs > 1:
        executor = ThreadPoolExecutor(max_workers=config.num_envs)
    try:
        queries_at_start = [tracker.start(env) for env in envs]
        current_obs = [env.reset() for env in envs]
        update_index = 0
        stats = {}
        while tracker.wall_env_steps < config.total_env_steps:
            batch = collect_rollouts(envs, ac, config, agent_rng, tracker,
                                     current_obs, queries_at_start,
                                     record_sink=record_sink,
                                     executor=executor)
            batch.advantages, batch.returns = compute_gae(
                batch.rewards, batch.values, batch.dones,
                config.gamma, config.gae_lambda, batch.bootstrap_values)
            stats = ppo_update(batch, ac, adam_state, config, shuffle_rng)
            update_index += 1
            if progress_fn is not None:
                progress_fn({
                    "env_steps": tracker.wall_env_steps,
                    "lsr_running": _running_lsr(tracker.records),
                    "aaf_running": _running_aaf(tracker.records),
                    "entropy": stats["entropy"],
                    "clip_fraction": stats["clip_fraction"],
                })
            if (checkpoint_path is not None
                    and update_index % config.checkpoint_interval == 0):
                ac.save(checkpoint_path)
        if checkpoint_path is not None:
            ac.save(checkpoint_path)
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
    return ac, tracker.records, stats


def _running_lsr(records):
    if not records:
        return None
    return sum(1 for r in records if r.fooled) / len(records)


def _running_aaf(records):
    steps = [r.steps_used for r in records if r.fooled]
    return sum(steps) / len(steps) if steps else None


def evaluate_random_policy(model, corpus, scenario, episodes, seed,
                           defense=None):
    """Frozen uniform-random policy baseline; returns its EpisodeRecords."""
    env = EvasionEnv(corpus, model, scenario,
                     rng=np.random.default_rng(seed),
                     defense=defense,
                     oracle_rng=np.random.default_rng(seed + 400))
    action_rng = np.random.default_rng(seed + 500)
    tracker = _EpisodeTracker(scenario.value)
    for _ in range(episodes):
        queries = tracker.start(env)
        env.reset()
        done = False
        while not done:
            outcome = env.step(int(action_rng.integers(ACTION_COUNT)))
            tracker.wall_env_steps += 1
            done = outcome.done
        tracker.finish(env, queries)
    return tracker.records
