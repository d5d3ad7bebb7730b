"""Deterministic stream derivation for reproducible parallel simulation.

Every random draw in the library comes from a stream identified by a root
seed plus an integer path (purpose tag, round, candidate index, ...).
Streams derived from distinct paths are statistically independent, and the
same path always yields the same stream regardless of evaluation order or
worker count.
"""

from __future__ import annotations

import numpy as np

# Purpose tags used as the first path element so that planning, execution,
# evaluation and generation draws never share a stream.
PLAN = 0
EXECUTE = 1
EVAL = 2
GENERATE = 3
NOISE = 4


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, path)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=path))


def stream_key(seed: int, *path: int) -> int:
    """Return a uint64 key for (seed, path), used to seed simulation kernels."""
    ss = np.random.SeedSequence(seed, spawn_key=path)
    return int(ss.generate_state(1, np.uint64)[0])


def run_seeds(seed: int, n: int) -> np.ndarray:
    """Derive ``n`` independent uint64 seeds, one per evaluation replicate."""
    return np.random.SeedSequence(seed, spawn_key=(EVAL,)).generate_state(n, np.uint64)
