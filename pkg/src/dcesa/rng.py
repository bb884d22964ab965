"""Seed handling. All randomness goes through numpy PCG64 generators."""

from __future__ import annotations

import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    """Return ``seed`` if it already is a Generator, else build one from it."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(seed: int, index: int) -> int:
    """Integer seed of child ``index`` of ``seed`` (same as ``SeedSequence(seed).spawn(n)[index]``)."""
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent integer seeds from a root seed.

    Child seeds depend only on ``(seed, index)``, so work can be split across any
    number of workers without changing results.
    """
    return [child_seed(seed, i) for i in range(n)]
