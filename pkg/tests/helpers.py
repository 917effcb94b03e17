"""Shared instance builders for the test suite."""

import numpy as np


def random_symmetric(rng, n):
    m = rng.standard_normal((n, n))
    return (m + m.T) / 2


def positive_cloud(m=400, seed=0):
    """Points in the positive quadrant with norm at most one."""
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0.3, 1.0, m))
    t = rng.uniform(0.05, np.pi / 2 - 0.05, m)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def indefinite_cloud(m=400, seed=0):
    """Points (a, b) with a in [0.6, 0.9], |b| <= 0.4 so a a' - b b' lies in [0.2, 0.97]."""
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0.6, 0.9, m), rng.uniform(-0.4, 0.4, m)])
