"""Seeded random streams.

One root seed feeds every consumer. Each consumer gets its own generator,
keyed by a fixed stream id, so adding draws in one place never shifts the
numbers seen by another:

    0 data       synthetic dataset generation
    1 init       model parameter initialisation
    2 batches    epoch permutations
    3 ssid       one-third sampling and row permutation
    4 projection random projections in the analysis module
    5 theory     Monte-Carlo draws
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "data": 0,
    "init": 1,
    "batches": 2,
    "ssid": 3,
    "projection": 4,
    "theory": 5,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for consumer ``name``; ``extra`` keys split it further (epoch, chain...)."""
    return np.random.default_rng([int(seed), STREAMS[name], *map(int, extra)])
