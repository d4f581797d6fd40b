import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pixelevade.classifier import train_classifier
from pixelevade.dataset import CorpusConfig, generate_corpus


@pytest.fixture(scope="session")
def tiny_corpus():
    """Small 4-class corpus for fast environment/oracle tests."""
    cfg = CorpusConfig(class_count=4, samples_per_class=40,
                       noise_levels=[0.05] * 4, seed=142)
    return generate_corpus(cfg)


@pytest.fixture(scope="session")
def tiny_model(tiny_corpus):
    """Quickly trained classifier over the tiny corpus (shared, read-only)."""
    train, test = tiny_corpus
    model, report = train_classifier(train, test, epochs=4, batch_size=32,
                                     seed=242)
    assert report.final_train_accuracy > 0.9
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
