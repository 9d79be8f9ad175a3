"""Seeding conventions shared by every stochastic routine.

Stream ``i`` derived from a master seed is ``default_rng(SeedSequence([master, i]))``,
so work items can run in any order (or in parallel) and still reproduce.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def substream(master: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), int(i)]))


def substreams(master: int, count: int) -> list[np.random.Generator]:
    return [substream(master, i) for i in range(count)]
