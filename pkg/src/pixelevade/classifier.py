"""Target CNN: definition, training, evaluation, and serialization.

The classifier is the fixed model the attack tries to evade. Inference is
deterministic; randomness enters only in the disclosure oracle layer.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import NormalizationSpec, normalize_batch
from .nn import AdamState, Network, adam_step, cross_entropy, sequential, softmax
from .nn.checkpoint import (CheckpointError, network_entries,
                            network_from_entries, read_container,
                            write_container)

_MODEL_MAGIC = "EVNN"
_TAG_NORM = 10


def build_network(class_count, rng):
    """conv 3->16 / relu / conv 16->32 s2 / relu / conv 32->32 s2 / relu /
    flatten / dense 64 / relu / dense class_count. All convs 3x3, padding 1,
    so 32x32 inputs reduce to an 8x8x32 feature map."""
    return sequential([
        ("conv", 3, 16, 3, 1, 1),
        ("relu",),
        ("conv", 16, 32, 3, 2, 1),
        ("relu",),
        ("conv", 32, 32, 3, 2, 1),
        ("relu",),
        ("flatten",),
        ("dense", 32 * 8 * 8, 64),
        ("relu",),
        ("dense", 64, class_count),
    ], rng)


@dataclass
class ClassifierModel:
    network: Network
    normalization: NormalizationSpec
    class_count: int

    def predict_probs(self, image):
        """Probability vector and argmax label (lowest index wins ties) for
        one raw [0,1] image of shape (3, 32, 32)."""
        probs = self.predict_probs_batch(image[None])[0]
        return probs, int(np.argmax(probs))

    def predict_probs_batch(self, images):
        x = normalize_batch(images, self.normalization)
        logits = self.network.forward(x, cache=False)
        return softmax(logits, axis=1)

    def predict_labels(self, images):
        return np.argmax(self.predict_probs_batch(images), axis=1)


@dataclass
class TrainReport:
    epochs_run: int
    final_train_accuracy: float
    final_test_accuracy: float
    loss_curve: list = field(default_factory=list)
    train_accuracy_curve: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "epochs_run": self.epochs_run,
            "final_train_accuracy": self.final_train_accuracy,
            "final_test_accuracy": self.final_test_accuracy,
            "loss_curve": self.loss_curve,
            "train_accuracy_curve": self.train_accuracy_curve,
        }, indent=2)


def _accuracy(model, images, labels, batch_size=256):
    if len(images) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(images), batch_size):
        batch = images[start:start + batch_size]
        correct += int(np.sum(model.predict_labels(batch) == labels[start:start + batch_size]))
    return correct / len(images)


def train_classifier(train, test, epochs, batch_size=64, seed=0,
                     learning_rate=1e-3,
                     normalization=None):
    """Minimize cross-entropy with Adam; deterministic given the seed.

    Aborts with a diagnostic if the loss goes non-finite.
    """
    if len(train) == 0:
        raise ValueError("training corpus is empty")
    labels_seen = np.unique(train.labels)
    class_count = int(labels_seen.max()) + 1
    if not np.array_equal(labels_seen, np.arange(class_count)):
        raise ValueError("class labels must be dense in [0, class_count)")

    rng = np.random.default_rng(seed)
    normalization = normalization or NormalizationSpec()
    net = build_network(class_count, rng)
    model = ClassifierModel(net, normalization, class_count)
    state = AdamState(net, learning_rate=learning_rate)

    x_all = normalize_batch(train.images, normalization)
    y_all = train.labels
    loss_curve = []
    acc_curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            logits = net.forward(x_all[idx], cache=True)
            loss, dlogits = cross_entropy(logits, y_all[idx])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"classifier training diverged: loss {loss} at epoch {epoch}"
                )
            net.zero_grads()
            net.backward(dlogits)
            adam_step(net, state)
            losses.append(float(loss))
        loss_curve.append(float(np.mean(losses)))
        acc_curve.append(_accuracy(model, train.images, train.labels))

    report = TrainReport(
        epochs_run=epochs,
        final_train_accuracy=acc_curve[-1] if acc_curve else 0.0,
        final_test_accuracy=_accuracy(model, test.images, test.labels),
        loss_curve=loss_curve,
        train_accuracy_curve=acc_curve,
    )
    return model, report


def save_model(path, model):
    entries = [(_TAG_NORM, [model.class_count],
                [np.asarray(model.normalization.mean, dtype=np.float32),
                 np.asarray(model.normalization.std, dtype=np.float32)])]
    entries.extend(network_entries(model.network))
    write_container(path, _MODEL_MAGIC, entries)


def load_model(path):
    entries = read_container(path, _MODEL_MAGIC)
    if not entries or entries[0][0] != _TAG_NORM:
        raise CheckpointError(f"{path}: missing normalization entry")
    _, config, tensors = entries[0]
    class_count = config[0]
    spec = NormalizationSpec(tuple(tensors[0].tolist()), tuple(tensors[1].tolist()))
    net = network_from_entries(entries[1:])
    return ClassifierModel(net, spec, class_count)
