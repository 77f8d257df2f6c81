"""Reproducible random streams keyed by (seed, stream ids)."""

import numpy as np


def stream(seed, *keys):
    """Return an independent Generator for ``seed`` and an optional key path.

    ``seed`` may be an int or a tuple of ints such as ``(seed, realization)``.

    Streams with different keys are statistically independent, so parallel
    work can be split over keys without changing results.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [int(s) for s in seed] if isinstance(seed, (tuple, list)) else int(seed)
    keys = tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=keys))
