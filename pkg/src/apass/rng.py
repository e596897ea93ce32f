"""Deterministic RNG stream derivation.

Every random quantity in a campaign is drawn from its own stream keyed by
``(seed, purpose, *indices)``. Adding or removing a consumer never shifts
the draws seen by another one.
"""

import numpy as np

PHASES = 1
SHADOW = 2
LOS = 3
PREDICTION = 4
USERS = 5
TRIAL = 6


def stream(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), purpose, *map(int, keys)]))


def child_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
