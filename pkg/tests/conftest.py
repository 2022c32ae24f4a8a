import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from reps.services.cache import clear_cache
from reps.services.distance import DistanceMatrix
from reps.services.settings import RepsConfig

# 4-point worked example: labels A A B B
WORKED_LABELS = np.array([0, 0, 1, 1])
WORKED_VALUES = np.array([
    [0.0, 1.0, 4.0, 5.0],
    [1.0, 0.0, 3.0, 6.0],
    [4.0, 3.0, 0.0, 2.0],
    [5.0, 6.0, 2.0, 0.0],
])


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """No config file, env overrides or cached matrices leak between tests."""
    for name in list(os.environ):
        if name.startswith("REPS_") and name != "REPS_DATA_DIR":
            monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("REPS_CONFIG", str(tmp_path / "no_such_config.json"))
    clear_cache()
    yield
    clear_cache()


@pytest.fixture
def worked_matrix():
    return DistanceMatrix(WORKED_VALUES)


@pytest.fixture
def worked_labels():
    return WORKED_LABELS.copy()


@pytest.fixture
def worked_config():
    return RepsConfig(beta=2.0)


def random_points(rng, n, d=2, classes=2, spread=1.0):
    """Gaussian blobs, every class guaranteed at least two members."""
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    centers = rng.normal(scale=3.0, size=(classes, d))
    points = centers[labels] + rng.normal(scale=spread, size=(n, d))
    return points, labels


def random_matrix(rng, n, d=2, classes=2):
    from scipy.spatial.distance import pdist, squareform
    points, labels = random_points(rng, n, d, classes)
    return DistanceMatrix(squareform(pdist(points))), labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
