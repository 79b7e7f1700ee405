"""Benchmark objectives.

The n-dimensional valley function drives the simulation studies; the 2-D
entries are served by the demonstration service on the normalized [-1, 1]^2
box (each is an affine image of its canonical domain). All are deterministic
and noise-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SearchSpace

__all__ = ["rosenbrock", "BenchmarkObjective", "OBJECTIVES"]


def rosenbrock(x: np.ndarray) -> np.ndarray | float:
    """Chained valley function: sum of 100*(x[i+1]-x[i]^2)^2 + (1-x[i])^2.

    Accepts a single point or an (n, p) batch. Global minimum 0 at all-ones;
    value p-1 at the origin.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    a = pts[:, 1:] - pts[:, :-1] ** 2
    b = 1.0 - pts[:, :-1]
    val = (100.0 * a * a + b * b).sum(axis=1)
    return float(val[0]) if single else val


def _rosenbrock2d(z: np.ndarray) -> float:
    # canonical domain [-2, 2]^2
    return float(rosenbrock(2.0 * np.asarray(z, dtype=float)))


def _rastrigin2d(z: np.ndarray) -> float:
    # canonical domain [-5.12, 5.12]^2
    x = 5.12 * np.asarray(z, dtype=float)
    return float(20.0 + (x * x - 10.0 * np.cos(2.0 * np.pi * x)).sum())


def _branin(z: np.ndarray) -> float:
    # canonical domain x1 in [-5, 10], x2 in [0, 15]
    z = np.asarray(z, dtype=float)
    x1 = 2.5 + 7.5 * z[0]
    x2 = 7.5 + 7.5 * z[1]
    a, b, c = 1.0, 5.1 / (4.0 * np.pi**2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * np.pi)
    return float(a * (x2 - b * x1 * x1 + c * x1 - r) ** 2 + s * (1.0 - t) * np.cos(x1) + s)


@dataclass(frozen=True)
class BenchmarkObjective:
    """A named 2-D objective over the normalized box."""

    name: str
    fn: Callable[[np.ndarray], float]

    @property
    def space(self) -> SearchSpace:
        return SearchSpace.unit(2)

    def __call__(self, z: np.ndarray) -> float:
        return self.fn(z)


OBJECTIVES: dict[str, BenchmarkObjective] = {
    "rosenbrock2d": BenchmarkObjective("rosenbrock2d", _rosenbrock2d),
    "rastrigin2d": BenchmarkObjective("rastrigin2d", _rastrigin2d),
    "branin": BenchmarkObjective("branin", _branin),
}
