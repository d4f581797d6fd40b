"""Disclosure oracle: scenario-filtered classifier responses and the
Dirichlet noise defense.

The oracle is the only component the attacker queries. It wraps a trained
classifier behind one of four information-disclosure scenarios and counts
queries. The defense conditions on the classifier's predicted label (a
deployed defense cannot know ground truth).
"""

import enum
from dataclasses import dataclass

import numpy as np


class Scenario(enum.Enum):
    BLACK_BOX = "black-box"
    TRUE_DISTRIBUTION = "true-distribution"
    RANDOMIZED_OTHERS = "randomized-others"
    CORRECT_ONLY = "correct-only"

    @classmethod
    def from_name(cls, name):
        for scenario in cls:
            if scenario.value == name:
                return scenario
        valid = " | ".join(s.value for s in cls)
        raise ValueError(f"unknown scenario {name!r}; expected one of: {valid}")


@dataclass
class DefenseConfig:
    dirichlet_alpha: float = 1.0

    def __post_init__(self):
        if not self.dirichlet_alpha > 0:
            raise ValueError("dirichlet_alpha must be > 0")


@dataclass
class DisclosureResponse:
    predicted_label: int
    confidence_vector: np.ndarray
    query_index: int


def randomize_confidences(probs, predicted_label, alpha, rng):
    """Keep the predicted entry exact; split the residual mass over the other
    classes with symmetric Dirichlet(alpha) weights (normalized Gamma draws).

    Draws fresh randomness every call, so repeated queries on the same input
    return different vectors.
    """
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[0]
    if k < 2:
        raise ValueError("need at least 2 classes to randomize")
    p_pred = probs[predicted_label]
    raw = rng.gamma(alpha, 1.0, size=k - 1)
    total = raw.sum()
    if total <= 0.0:  # pathological underflow for tiny alpha
        weights = np.full(k - 1, 1.0 / (k - 1))
    else:
        weights = raw / total
    out = np.empty(k, dtype=np.float64)
    others = np.arange(k) != predicted_label
    out[others] = (1.0 - p_pred) * weights
    out[predicted_label] = p_pred
    return out


def filter_confidences(probs, predicted_label, scenario, defense, rng):
    """Scenario-specific view of the classifier's probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if scenario is Scenario.BLACK_BOX:
        out = np.zeros_like(probs)
        out[predicted_label] = 1.0
        return out
    if scenario is Scenario.TRUE_DISTRIBUTION:
        return probs.copy()
    if scenario is Scenario.RANDOMIZED_OTHERS:
        return randomize_confidences(probs, predicted_label,
                                     defense.dirichlet_alpha, rng)
    if scenario is Scenario.CORRECT_ONLY:
        out = np.zeros_like(probs)
        out[predicted_label] = probs[predicted_label]
        return out
    raise ValueError(f"unhandled scenario {scenario}")


class Oracle:
    """Per-attack-run query surface over a fixed classifier.

    One instance per environment worker; the rng stream is consumed only by
    the randomized scenario, so dynamics stay aligned across scenarios run
    with identical seeds.
    """

    def __init__(self, model, scenario, defense=None, rng=None):
        self.model = model
        self.scenario = scenario
        self.defense = defense or DefenseConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._query_count = 0

    def disclose(self, image):
        probs, predicted = self.model.predict_probs(image)
        vector = filter_confidences(probs, predicted, self.scenario,
                                    self.defense, self.rng)
        self._query_count += 1
        return DisclosureResponse(predicted, vector, self._query_count)

    @property
    def query_count(self):
        return self._query_count

    def reset_query_count(self):
        self._query_count = 0
