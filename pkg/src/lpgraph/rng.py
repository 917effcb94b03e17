"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox generator keyed
by ``(seed, stream)``.  Distinct streams never share counters, so latent
positions, pair placement, adjacency noise and null draws stay independent
even when they reuse a base seed.
"""

import numpy as np

MASK64 = (1 << 64) - 1

STREAM_LATENT = 1
STREAM_PLACE = 2
STREAM_ADJACENCY = 3
STREAM_NULL = 4
STREAM_SOLVER = 5
STREAM_NORM = 6


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and ``stream``."""
    key = np.array([int(seed) & MASK64, int(stream) & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replicate_seed(base_seed: int, index: int) -> int:
    """Per-replicate seed ``base_seed XOR index``."""
    return (int(base_seed) ^ int(index)) & MASK64
