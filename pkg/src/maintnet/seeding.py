"""Deterministic random-stream derivation.

Every simulated trajectory, repetition or decision gets its own
counter-keyed stream derived from a master seed plus integer identifiers,
so results never depend on thread scheduling or on how much randomness a
sibling task consumed.
"""
from __future__ import annotations

import numpy as np

__all__ = ["derive_rng", "derive_seed_block", "spawn_key"]


def spawn_key(master_seed: int, *ids: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(master_seed),) + tuple(int(i) for i in ids))


def derive_rng(master_seed: int, *ids: int) -> np.random.Generator:
    """Counter-based generator for the stream (master_seed, ids...)."""
    return np.random.Generator(np.random.Philox(spawn_key(master_seed, *ids)))


def derive_seed_block(master_seed: int, count: int, *ids: int) -> np.ndarray:
    """``count`` uint64 seeds for per-rollout streams, deterministic in ids."""
    return spawn_key(master_seed, *ids).generate_state(count, dtype=np.uint64)
