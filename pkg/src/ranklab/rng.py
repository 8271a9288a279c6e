"""Deterministic random-stream construction.

Every stochastic component draws from a counter-based generator keyed by
the root seed plus a small tuple of integers identifying the consumer
(experiment kind, system-size index, replica index, ...). Streams built
this way are independent of worker count and of the order in which
replicas are scheduled, which is what makes reruns byte-identical.
"""
from __future__ import annotations

import numpy as np


def replica_rng(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` under root ``seed``.

    The same (seed, key) pair always yields the same stream; distinct
    keys yield statistically independent streams.
    """
    if not all(isinstance(k, (int, np.integer)) and k >= 0 for k in key):
        raise ValueError(f"stream key must be non-negative integers, got {key!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
