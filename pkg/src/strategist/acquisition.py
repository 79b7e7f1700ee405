"""Expected-improvement merit, its multistart bounded maximization, and the
forward search loop built on both."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from . import _kernels, gp
from .core import BoParams, SearchSpace, Trajectory, seeded_rng
from .sampling import lhs

__all__ = [
    "BoRunRecord",
    "EiMaxResult",
    "ObjectiveError",
    "expected_improvement",
    "expected_improvement_batch",
    "maximize_ei",
    "run_bo",
]

# relative half-step for the central differences fed to the local optimizer
_FD_REL_STEP = 1e-6
# local ascent budget per start
_LBFGS_MAXITER = 60

EI_BELOW_TOLERANCE = "ei_below_tolerance"
ITERATION_BUDGET = "iteration_budget"


class ObjectiveError(RuntimeError):
    """Objective callback failed mid-run; ``partial_record`` holds the
    record accumulated before the failure."""

    def __init__(self, message: str, partial_record: "BoRunRecord"):
        super().__init__(message)
        self.partial_record = partial_record


@dataclass(frozen=True)
class EiMaxResult:
    """Best point found by the multistart ascent. ``flat`` marks a merit
    surface with no usable relief across starts and optima."""

    x: np.ndarray
    ei: float
    flat: bool


@dataclass(frozen=True)
class BoRunRecord:
    """Completed (or aborted) forward run: full history, per-iteration
    incumbent curve (index 0 = before the first iteration), and why it
    stopped."""

    trajectory: Trajectory
    best_curve: np.ndarray
    terminated_by: str

    def __post_init__(self):
        bc = np.asarray(self.best_curve, dtype=float)
        bc.flags.writeable = False
        object.__setattr__(self, "best_curve", bc)


def expected_improvement(m: gp.GpModel, f_min: float, x: np.ndarray) -> float:
    """Expected amount by which ``x`` beats the incumbent under the surrogate.

    Zero-deviation points fall back to the deterministic improvement
    max(0, f_min - mean); the result is never negative.
    """
    return float(expected_improvement_batch(m, f_min, np.asarray(x, dtype=float)[None, :])[0])


def expected_improvement_batch(m: gp.GpModel, f_min: float, Xq: np.ndarray) -> np.ndarray:
    return _kernels.ei_batch(
        Xq, m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b, m.sigma2, float(f_min)
    )


def maximize_ei(
    m: gp.GpModel,
    f_min: float,
    space: SearchSpace,
    n_starts: int,
    seed,
) -> EiMaxResult:
    """Multistart bounded quasi-Newton ascent of the merit surface.

    Starts come from a seeded Latin hypercube; each runs L-BFGS-B with
    central-difference gradients (half-step 1e-6 of the axis range). The
    best local optimum wins; exact ties keep the lowest start index.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    f_min = float(f_min)
    steps = _FD_REL_STEP * space.widths
    bounds = list(zip(space.lower, space.upper))

    def neg_ei_and_grad(x):
        ei, grad = _kernels.ei_point_and_grad(
            x, m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b, m.sigma2, f_min, steps
        )
        return -ei, -grad

    starts = lhs(space, n_starts, seed)
    start_ei = expected_improvement_batch(m, f_min, starts)
    best_x: np.ndarray | None = None
    best_ei = -np.inf
    seen_lo, seen_hi = float(start_ei.min()), float(start_ei.max())
    for i in range(n_starts):
        res = minimize(
            neg_ei_and_grad,
            starts[i],
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": _LBFGS_MAXITER},
        )
        ei_val = -float(res.fun)
        seen_lo = min(seen_lo, ei_val)
        seen_hi = max(seen_hi, ei_val)
        if ei_val > best_ei:
            best_ei = ei_val
            best_x = np.clip(res.x, space.lower, space.upper)
    assert best_x is not None
    flat = (seen_hi - seen_lo) <= 1e-9 * max(1.0, abs(seen_hi))
    return EiMaxResult(x=best_x, ei=best_ei, flat=flat)


def run_bo(
    initial: Trajectory,
    params: BoParams,
    objective: Callable[[np.ndarray], float],
    max_iter: int,
    seed,
    on_iterate: Callable[[np.ndarray, float], None] | None = None,
) -> BoRunRecord:
    """Iterate fit -> maximize merit -> evaluate -> append until the merit
    peak drops below tolerance or the budget runs out.

    Bit-reproducible for a fixed seed. ``on_iterate`` (if given) observes
    each accepted sample; a failing objective aborts with the partial record
    attached to the raised ``ObjectiveError``.
    """
    if len(initial) < 2:
        raise ValueError("initial trajectory needs at least 2 samples")
    if max_iter < 0:
        raise ValueError("max_iter must be nonnegative")
    space = initial.space
    X = [np.asarray(row, dtype=float) for row in initial.X]
    f = list(initial.f)
    best_curve = [min(f)]
    terminated_by = ITERATION_BUDGET

    def record() -> BoRunRecord:
        return BoRunRecord(
            trajectory=Trajectory(space, np.vstack(X), np.asarray(f)),
            best_curve=np.asarray(best_curve),
            terminated_by=terminated_by,
        )

    for it in range(max_iter):
        model = gp.fit(np.vstack(X), np.asarray(f), params.lam)
        res = maximize_ei(
            model, model.f_min, space, params.n_starts, seeded_rng(seed, 0xB0, it)
        )
        if res.ei < params.ei_tolerance:
            terminated_by = EI_BELOW_TOLERANCE
            break
        try:
            fval = float(objective(res.x))
        except Exception as exc:
            raise ObjectiveError(
                f"objective failed at iteration {it + 1}: {exc}", record()
            ) from exc
        X.append(res.x)
        f.append(fval)
        best_curve.append(min(best_curve[-1], fval))
        if on_iterate is not None:
            on_iterate(res.x, fval)
    return record()
