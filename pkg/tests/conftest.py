import numpy as np
import pytest

from mcode import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20250818)


def make_coupled_dataset(n=200, m=4, d=3, seed=42, coupling=True):
    """Random dataset whose outputs depend on X, and on each other when
    coupling is set: the last output column copies the one before it."""
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(n, m))
    w = gen.normal(size=(m, d)) * 1.2
    p = 1.0 / (1.0 + np.exp(-(X @ w)))
    Y = (gen.random((n, d)) < p).astype(int)
    if coupling and d >= 2:
        Y[:, d - 1] = Y[:, d - 2]
    return Dataset(X, Y)


@pytest.fixture
def coupled_dataset():
    return make_coupled_dataset()
