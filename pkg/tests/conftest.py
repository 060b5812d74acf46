import numpy as np
import pytest


def rand_sym(rng, n, lo=-1.0, hi=1.0):
    a = rng.uniform(lo, hi, (n, n))
    return np.triu(a) + np.triu(a, 1).T


def fd_grad(f, a, h=1e-6):
    """Central differences over upper-triangle coordinates, halved off the diagonal."""
    n = a.shape[0]
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = h
            d = (f(a + e) - f(a - e)) / (2 * h)
            g[i, j] = g[j, i] = d if i == j else d / 2
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
