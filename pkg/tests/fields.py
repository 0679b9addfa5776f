"""Small rate fields for tests."""

import numpy as np

from exclusion.environment import RateField


def from_matrix(matrix, positions=None):
    matrix = np.asarray(matrix, dtype=float)
    if positions is None:
        positions = np.arange(matrix.shape[0], dtype=float)
    return RateField(positions, matrix)


def chain(n, rate=1.0):
    m = np.zeros((n, n))
    for i in range(n - 1):
        m[i, i + 1] = m[i + 1, i] = rate
    return from_matrix(m)


def random_symmetric(rng, n, density=1.0):
    m = rng.random((n, n)) * (rng.random((n, n)) < density)
    m = np.triu(m, 1)
    return from_matrix(m + m.T)


def random_directed(rng, n):
    m = rng.random((n, n))
    np.fill_diagonal(m, 0)
    return from_matrix(m)
