"""Deterministic RNG derivation for sweeps and samplers.

Every random quantity in a sweep is drawn from a Generator derived from the
master seed plus an integer key path, so repeat runs (and pgd vs oracle modes
sharing a master seed) see identical subspaces and subsamples.
"""

import numpy as np

# key-path tags; kept distinct so e.g. subsampling never collides with a cell
TAG_SUBSAMPLE = 101
TAG_CELL = 102
TAG_POINT = 103


def derive_rng(master_seed, *path):
    """Generator seeded from (master_seed, *path); all components ints."""
    parts = (int(master_seed),) + tuple(int(k) for k in path)
    return np.random.default_rng(np.random.SeedSequence(parts))


def as_rng(seed_or_rng):
    """Pass Generators through; anything else feeds default_rng."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
