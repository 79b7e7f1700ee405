"""Shared domain types: box search spaces, search trajectories, and their
normalization and JSON persistence.

All types are immutable after construction (array fields are marked
read-only), so instances can be shared freely across worker processes and
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "SearchSpace",
    "Trajectory",
    "BoParams",
    "IboEstimate",
    "BoxTransform",
    "TrajectoryFormatError",
    "normalize_trajectory",
    "save_trajectory",
    "load_trajectory",
    "seeded_rng",
]


class TrajectoryFormatError(ValueError):
    """A trajectory document or sample violates the schema.

    ``record`` is the 0-based index of the offending sample, or None when the
    problem is not tied to a single sample.
    """

    def __init__(self, message: str, record: int | None = None):
        super().__init__(message)
        self.record = record


def seeded_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for stream ``key`` under a root ``seed``.

    Distinct keys yield statistically independent streams; the mapping is
    stable across processes and runs, so parallel work can be seeded by task
    index without regard to scheduling order.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box domain with strictly positive per-axis widths."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _readonly(np.atleast_1d(self.lower))
        upper = _readonly(np.atleast_1d(self.upper))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("bounds must be finite")
        if not (lower < upper).all():
            bad = int(np.argmin(upper - lower))
            raise ValueError(f"axis {bad}: lower bound {lower[bad]} must be < upper bound {upper[bad]}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, p: int) -> "SearchSpace":
        """The normalized box [-1, 1]^p."""
        return cls(np.full(p, -1.0), np.full(p, 1.0))

    @property
    def p(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def log_volume(self) -> float:
        # volumes overflow floats beyond ~30 dimensions, so only the log is exposed
        return float(np.log(self.widths).sum())

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x >= self.lower).all() and (x <= self.upper).all())

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class BoxTransform:
    """Invertible affine map between a box and the normalized [-1, 1] box.

    ``scale`` holds the per-axis half-widths; kernel weights transform as
    ``w_normalized = w_original * scale**2``.
    """

    space: SearchSpace

    @property
    def scale(self) -> np.ndarray:
        return self.space.widths / 2.0

    @property
    def center(self) -> np.ndarray:
        return (self.space.lower + self.space.upper) / 2.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return self.center + self.scale * np.asarray(z, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """Ordered solution/objective history over a search space.

    Samples must lie inside the space (inclusive) and be pairwise distinct:
    a repeated solution makes the surrogate correlation matrix singular, so
    duplicates are rejected here rather than silently perturbed.
    """

    space: SearchSpace
    X: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        if X.shape[1] != self.space.p:
            raise TrajectoryFormatError(
                f"samples have dimension {X.shape[1]}, space has dimension {self.space.p}"
            )
        if X.shape[0] != f.shape[0]:
            raise TrajectoryFormatError(
                f"{X.shape[0]} sample points but {f.shape[0]} objective values"
            )
        if not np.isfinite(X).all() or not np.isfinite(f).all():
            bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1) | ~np.isfinite(f))[0])
            raise TrajectoryFormatError(f"sample {bad}: non-finite value", record=bad)
        below = X < self.space.lower
        above = X > self.space.upper
        if below.any() or above.any():
            bad = int(np.flatnonzero((below | above).any(axis=1))[0])
            raise TrajectoryFormatError(
                f"sample {bad}: point {X[bad].tolist()} outside the search space", record=bad
            )
        seen: dict[bytes, int] = {}
        for i in range(X.shape[0]):
            key = X[i].tobytes()
            if key in seen:
                raise TrajectoryFormatError(
                    f"sample {i}: duplicates sample {seen[key]}", record=i
                )
            seen[key] = i
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "f", _readonly(f))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def samples(self) -> Iterator[tuple[np.ndarray, float]]:
        return zip(self.X, self.f)

    def prefix(self, n: int) -> "Trajectory":
        if not 1 <= n <= len(self):
            raise ValueError(f"prefix length {n} outside 1..{len(self)}")
        return Trajectory(self.space, self.X[:n], self.f[:n])

    def extended(self, x: np.ndarray, fval: float) -> "Trajectory":
        return Trajectory(
            self.space,
            np.vstack([self.X, np.asarray(x, dtype=float)]),
            np.append(self.f, float(fval)),
        )


@dataclass(frozen=True)
class BoParams:
    """Forward-search settings: per-axis kernel decay weights plus the
    acquisition-maximization and termination knobs."""

    lam: np.ndarray
    ei_tolerance: float = 1e-3
    n_starts: int = 100

    def __post_init__(self):
        lam = _readonly(np.atleast_1d(self.lam))
        if not (lam > 0).all():
            raise ValueError("kernel weights must be strictly positive")
        if self.ei_tolerance <= 0:
            raise ValueError("ei_tolerance must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class IboEstimate:
    """Fitted explanation of a trajectory: kernel weights, rationality
    temperatures, exploration-set size, and the minimized cost with its
    per-sample breakdown."""

    lambda_hat: np.ndarray
    alpha_bo_hat: float
    alpha_ini_hat: float
    k0_hat: int
    cost: float
    ini_terms: dict[int, float]  # position i (1-based, i >= 2) -> exploration term
    bo_terms: dict[int, float]  # position j (1-based, j >= 3) -> search term
    table: list = field(default_factory=list, repr=False)
    improved: bool = True

    def selected_terms(self) -> dict[int, float]:
        """Terms that actually contribute to ``cost`` under the fitted split."""
        out = {i: v for i, v in self.ini_terms.items() if i <= self.k0_hat}
        out.update({j: v for j, v in self.bo_terms.items() if j > self.k0_hat})
        return out


def normalize_trajectory(t: Trajectory) -> tuple[Trajectory, BoxTransform]:
    """Affinely map a trajectory onto [-1, 1]^p, objective values unchanged.

    Returns the mapped trajectory and the transform, whose ``inverse`` undoes
    the map. Points are clipped by at most one ulp so boundary samples stay
    inside the normalized box despite rounding.
    """
    tr = BoxTransform(t.space)
    Xn = np.clip(tr.forward(t.X), -1.0, 1.0)
    return Trajectory(SearchSpace.unit(t.space.p), Xn, t.f), tr


def save_trajectory(t: Trajectory, path) -> None:
    """Write the self-describing JSON document (space + samples)."""
    with open(path, "w") as fh:
        json.dump(trajectory_to_document(t), fh, indent=1)


def load_trajectory(path) -> Trajectory:
    """Read a trajectory document, validating structure sample by sample."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TrajectoryFormatError(f"{path}: not valid JSON ({exc})") from exc
    return trajectory_from_document(doc)


def trajectory_from_document(doc: dict) -> Trajectory:
    if not isinstance(doc, dict) or "space" not in doc or "samples" not in doc:
        raise TrajectoryFormatError("document must contain 'space' and 'samples'")
    space_doc = doc["space"]
    try:
        space = SearchSpace(np.asarray(space_doc["lower"], dtype=float),
                            np.asarray(space_doc["upper"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise TrajectoryFormatError(f"bad space definition: {exc}") from exc
    xs, fs = [], []
    for i, rec in enumerate(doc["samples"]):
        if not isinstance(rec, dict) or "x" not in rec or "f" not in rec:
            raise TrajectoryFormatError(f"sample {i}: needs 'x' and 'f'", record=i)
        x = np.asarray(rec["x"], dtype=float)
        if x.ndim != 1 or x.shape[0] != space.p:
            raise TrajectoryFormatError(
                f"sample {i}: x has length {x.size}, expected {space.p}", record=i
            )
        xs.append(x)
        fs.append(float(rec["f"]))
    if not xs:
        raise TrajectoryFormatError("document contains no samples")
    return Trajectory(space, np.vstack(xs), np.asarray(fs))


def trajectory_to_document(t: Trajectory) -> dict:
    return {
        "space": {"lower": t.space.lower.tolist(), "upper": t.space.upper.tolist()},
        "samples": [{"x": x.tolist(), "f": float(fv)} for x, fv in t.samples],
    }
