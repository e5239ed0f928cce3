"""Seeded generation of valid random problems for round trips and tests."""

from __future__ import annotations

import numpy as np

from .core import ProblemCoefficients
from .numerics import uniform_grid


def random_problem(seed, m: int = 256, degree: int = 2) -> ProblemCoefficients:
    """Random valid coefficient set with a trigonometric-polynomial potential.

    All scalar coefficients are drawn from [-2, 2]; H2 is back-solved from a
    positive rho draw so the constraint H*H1 - H2 > 0 always holds.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    grid = uniform_grid(m)
    q = np.full(m + 1, rng.uniform(-2.0, 2.0))
    for k in range(1, degree + 1):
        q += rng.uniform(-2.0, 2.0) * np.cos(k * grid)
        q += rng.uniform(-2.0, 2.0) * np.sin(k * grid)
    h = rng.uniform(-2.0, 2.0)
    big_h = rng.uniform(-2.0, 2.0)
    h1 = rng.uniform(-2.0, 2.0)
    rho = rng.uniform(0.5, 2.0)
    h2 = big_h * h1 - rho
    return ProblemCoefficients(grid, q, h, big_h, h1, h2)
