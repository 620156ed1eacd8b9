"""Deterministic seed plan.

One master seed fans out into named substreams (table build, observed-data
synthesis, pseudo-observed selection, per-cell work, Monte Carlo nulls).
Every stream is a pure function of (master seed, stream id, indices), so a
run is reproducible under any parallel schedule.
"""

from __future__ import annotations

import numpy as np

# Stream ids are part of the reproducibility contract; do not renumber.
TABLE = 0
OBSERVED = 1
V_SELECT = 2
CELL = 3
MC_NULL = 4
RESIM = 5


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=tuple(key))


def rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for substream `key` of `master_seed`."""
    return np.random.default_rng(seed_sequence(master_seed, *key))


def substream_seed(master_seed: int, *key: int) -> int:
    """Collapse a substream to a plain integer seed (for APIs that take one)."""
    return int(seed_sequence(master_seed, *key).generate_state(1, np.uint64)[0])


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Stream for one Monte Carlo replicate; depends only on (seed, replicate)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))
