"""Seeded random streams shared by every module."""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Counter-based 64-bit generator; pass through an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def uniform_simplex(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    """``n`` points uniform on the probability simplex in R^K."""
    return rng.dirichlet(np.ones(K), size=n)
