"""The pixel-evasion MDP: episode lifecycle, action decoding, observation
assembly, reward computation, and the 32-step budget.

Actions index a (row, col, level) triple over the 32x32 grid with 8 intensity
levels (8192 actions). Applying an action writes level/7 to all three
channels of that pixel. Episodes start only on images the classifier gets
right, and end on a successful fool or after 32 steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .oracle import DefenseConfig, Oracle

GRID = 32
LEVELS = 8
ACTION_COUNT = GRID * GRID * LEVELS  # 8192
MAX_STEPS = 32
_IMG_FLAT = 3 * GRID * GRID  # 3072

REWARD_STEP = -1.0
REWARD_FOOL = 10.0
REWARD_FAIL = -10.0
# Per-episode return bounds implied by the additive reward composition.
RETURN_MIN = -(MAX_STEPS - 1) + (REWARD_STEP + REWARD_FAIL)  # -42
RETURN_MAX = REWARD_STEP + REWARD_FOOL  # +9


def decode_action(index):
    """index -> (row, col, level) under the (row*32 + col)*8 + level layout."""
    index = int(index)
    if not 0 <= index < ACTION_COUNT:
        raise ValueError(f"action index {index} out of range [0, {ACTION_COUNT})")
    return index // (GRID * LEVELS), (index // LEVELS) % GRID, index % LEVELS


def encode_action(row, col, level):
    if not (0 <= row < GRID and 0 <= col < GRID and 0 <= level < LEVELS):
        raise ValueError(f"({row}, {col}, {level}) outside action grid")
    return (row * GRID + col) * LEVELS + level


def step_reward(fooled, steps_taken):
    """Reward from outcome flags only; confidence values are structurally
    unavailable here. -1 per action, +10 on a fool, -10 on exhausting the
    budget without fooling (terms stack additively)."""
    reward = REWARD_STEP
    if fooled:
        reward += REWARD_FOOL
    elif steps_taken >= MAX_STEPS:
        reward += REWARD_FAIL
    return reward


def episode_return(rewards):
    return float(sum(rewards))


def observation_size(class_count):
    return 3 * _IMG_FLAT + 1 + 2 * class_count


@dataclass
class EvasionState:
    original: np.ndarray
    modified: np.ndarray
    delta: np.ndarray
    true_label: int
    steps_taken: int = 0
    done: bool = False
    last_response: object = None
    rewards: list = field(default_factory=list)


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def apply_action(state, action):
    """Write the decoded grayscale level to the action's pixel and refresh
    that pixel's delta. Overwrites are idempotent and still cost a step."""
    row, col, level = decode_action(action)
    value = np.float32(level / (LEVELS - 1))
    state.modified[:, row, col] = value
    state.delta[:, row, col] = state.modified[:, row, col] - state.original[:, row, col]


class EvasionEnv:
    """Single-agent environment instance; strictly serial reset/step usage.

    The sampling rng drives class/image selection; the oracle owns its own
    rng stream, consumed only in the randomized scenario, so episode dynamics
    are identical across scenarios under equal seeds.
    """

    MAX_RESET_REJECTIONS = 1000

    def __init__(self, corpus, model, scenario, rng, defense=None,
                 oracle_rng=None):
        corpus_classes = corpus.class_count
        if corpus_classes != model.class_count:
            raise ValueError(
                f"corpus has {corpus_classes} classes but model expects "
                f"{model.class_count}"
            )
        self.corpus = corpus
        self.model = model
        self.class_count = model.class_count
        self.rng = rng
        self.oracle = Oracle(model, scenario,
                             defense or DefenseConfig(),
                             oracle_rng if oracle_rng is not None else
                             np.random.default_rng(0))
        self._class_indices = [corpus.class_indices(c)
                               for c in range(self.class_count)]
        for c, idx in enumerate(self._class_indices):
            if len(idx) == 0:
                raise ValueError(f"corpus has no images for class {c}")
        self.state = None
        self._obs = np.zeros(observation_size(self.class_count), dtype=np.float32)

    @property
    def observation_size(self):
        return self._obs.shape[0]

    def reset(self):
        """Sample a class uniformly, then images of that class until the
        classifier predicts correctly; abort after 1000 straight rejections."""
        label = int(self.rng.integers(self.class_count))
        candidates = self._class_indices[label]
        for _ in range(self.MAX_RESET_REJECTIONS):
            image = self.corpus.images[candidates[self.rng.integers(len(candidates))]]
            _, predicted = self.model.predict_probs(image)
            if predicted == label:
                break
        else:
            raise RuntimeError(
                f"reset rejected {self.MAX_RESET_REJECTIONS} images in a row "
                f"for class {label}; classifier too weak for attack runs"
            )
        original = image.copy()
        state = EvasionState(
            original=original,
            modified=original.copy(),
            delta=np.zeros_like(original),
            true_label=label,
        )
        state.last_response = self.oracle.disclose(state.modified)
        self.state = state
        return self._build_observation()

    def step(self, action):
        state = self.state
        if state is None:
            raise RuntimeError("step called before reset")
        if state.done:
            raise RuntimeError("step called on a finished episode; reset first")
        apply_action(state, action)
        state.steps_taken += 1
        state.last_response = self.oracle.disclose(state.modified)
        fooled = state.last_response.predicted_label != state.true_label
        reward = step_reward(fooled, state.steps_taken)
        state.done = fooled or state.steps_taken >= MAX_STEPS
        state.rewards.append(reward)
        return StepOutcome(
            observation=self._build_observation(),
            reward=reward,
            done=state.done,
            info={"fooled": fooled, "steps_taken": state.steps_taken},
        )

    def _build_observation(self):
        state = self.state
        c = self.class_count
        obs = self._obs
        obs[:_IMG_FLAT] = state.original.ravel()
        obs[_IMG_FLAT:2 * _IMG_FLAT] = state.modified.ravel()
        obs[2 * _IMG_FLAT:3 * _IMG_FLAT] = state.delta.ravel()
        onehot = obs[3 * _IMG_FLAT:3 * _IMG_FLAT + c]
        onehot[:] = 0.0
        onehot[state.true_label] = 1.0
        obs[3 * _IMG_FLAT + c] = state.steps_taken / MAX_STEPS
        obs[3 * _IMG_FLAT + c + 1:] = state.last_response.confidence_vector
        return obs.copy()
