import numpy as np
import pytest

from renyikd.prng import make_rng


def unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_gram(rng, n, dim=None):
    """Trace-one Gram of n random unit vectors (cosine kernel / n)."""
    x = unit_rows(rng, n, dim or n)
    return x @ x.T / n


def random_psd(rng, n, rank=None):
    """Trace-one PSD matrix with random, non-constant diagonal."""
    x = rng.standard_normal((n, rank or n)) * rng.uniform(0.2, 2.0, size=(n, 1))
    a = x @ x.T
    return a / np.trace(a)


@pytest.fixture
def rng():
    return make_rng(1234, 0)
