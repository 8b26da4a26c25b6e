"""Seeded random number generation.

All randomness in the toolkit flows through PCG64 generators built here:
named algorithm, 64-bit seeding, unbiased bounded integer draws, and
SeedSequence.spawn for splitting independent child streams.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child generators, deterministic in (seed, n)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
