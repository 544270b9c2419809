import numpy as np
import pytest

from gslearn.data import Dataset, synth_blobs


@pytest.fixture
def tiny_dataset():
    """Deterministic 12-node, 2-class dataset small enough for gradient checks."""
    rng = np.random.default_rng(7)
    X = rng.normal(size=(12, 5))
    X[:6] += 2.0
    y = np.array([0] * 6 + [1] * 6)
    return Dataset(name="tiny", X=X, y=y, num_classes=2)


@pytest.fixture
def blobs_dataset():
    return synth_blobs(classes=3, per_class=20, dim=8, separation=4.0, noise=0.4, seed=3)
