import numpy as np
import pytest

from orderedforest.data import Dataset


def ordered_data(n=200, p=4, M=3, seed=0, binary_col=False):
    """Latent-logit ordered data with a continuous index in the first two columns."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    if binary_col:
        X[:, -1] = rng.integers(0, 2, size=n)
    latent = X[:, 0] - 0.5 * X[:, 1] + rng.logistic(size=n)
    cuts = np.quantile(latent, np.arange(1, M) / M)
    y = 1 + np.searchsorted(cuts, latent)
    names = tuple(f"x{j + 1}" for j in range(p))
    return Dataset(X, y, names, np.zeros(p, dtype=bool), M)


@pytest.fixture
def small_data():
    return ordered_data()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
