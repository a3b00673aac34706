import numpy as np
import pytest

from emconv.core import derive_stream


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def unit(d, seed=0):
    u = np.random.default_rng(seed).standard_normal(d)
    return u / np.linalg.norm(u)


@pytest.fixture
def stream():
    return derive_stream(20240611, "tests")
