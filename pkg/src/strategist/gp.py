"""Noise-free Gaussian-process surrogate with a constant trend.

Correlation between two points decays as ``exp(-sum_d lam[d] * (x_d - y_d)^2)``
with a per-axis weight vector ``lam``. The trend coefficient, process
variance, and correlation factorization are estimated once at fit time; the
prediction kernels then only need vector products against the stored solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import _kernels
from .core import seeded_rng

__all__ = ["GpModel", "GpFitError", "DegenerateDataError", "fit", "predict", "mle_lambda"]

# nugget escalation: relative floor, growth factor, and hard ceiling
_NUGGET_START = 1e-10
_NUGGET_GROWTH = 10.0
_NUGGET_MAX = 1e-4


class GpFitError(RuntimeError):
    """Correlation matrix stayed non-positive-definite through the whole
    nugget escalation ladder; carries the conditioning diagnostic."""


class DegenerateDataError(ValueError):
    """Objective values carry no variance, so the likelihood objective is
    unbounded and no weight vector is identifiable."""


@dataclass(frozen=True)
class GpModel:
    """Fitted surrogate state for one history.

    ``chol`` is the lower Cholesky factor of the correlation matrix after the
    nugget that made it factorizable; ``w`` and ``rinv1`` are the stored
    solves against the residual and the ones vector.
    """

    X: np.ndarray
    f: np.ndarray
    lam: np.ndarray
    chol: np.ndarray
    nugget: float
    b: float
    sigma2: float
    w: np.ndarray
    rinv1: np.ndarray
    s11: float
    log_det: float

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def f_min(self) -> float:
        return float(self.f.min())


def _correlation(X: np.ndarray, lam: np.ndarray) -> np.ndarray:
    a = (X * X) @ lam
    cross = (X * lam) @ X.T
    d2 = a[:, None] + a[None, :] - 2.0 * cross
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-d2)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def fit(X: np.ndarray, f: np.ndarray, lam: np.ndarray) -> GpModel:
    """Fit the surrogate to ``k >= 2`` distinct rows.

    On factorization failure the diagonal nugget escalates tenfold up to
    1e-4 (near-duplicate points occur in human demonstrations); beyond that
    a ``GpFitError`` reports the conditioning problem.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    f = np.ascontiguousarray(np.atleast_1d(f), dtype=float)
    lam = np.ascontiguousarray(np.atleast_1d(lam), dtype=float)
    k = X.shape[0]
    if k < 2:
        raise ValueError("need at least 2 training points")
    if f.shape[0] != k:
        raise ValueError("X and f lengths differ")
    if lam.shape[0] != X.shape[1]:
        raise ValueError("lam length must match input dimension")
    if not (lam > 0).all():
        raise ValueError("kernel weights must be strictly positive")

    R0 = _correlation(X, lam)
    nugget = _NUGGET_START * float(np.trace(R0)) / k
    L = None
    while True:
        try:
            L = cholesky(R0 + nugget * np.eye(k), lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            nugget *= _NUGGET_GROWTH
            if nugget > _NUGGET_MAX:
                raise GpFitError(
                    f"correlation matrix not positive definite at nugget {_NUGGET_MAX:g} "
                    f"(k={k}, min off-diagonal distance may be zero; "
                    f"diagonal range [{R0.min():.3g}, {R0.max():.3g}])"
                ) from None

    ones = np.ones(k)
    rinv1 = cho_solve((L, True), ones, check_finite=False)
    rinvf = cho_solve((L, True), f, check_finite=False)
    s11 = float(ones @ rinv1)
    b = float(ones @ rinvf) / s11
    resid = f - b
    w = cho_solve((L, True), resid, check_finite=False)
    if float(np.ptp(f)) == 0.0:
        # constant observations leave the process scale unidentified (the
        # variance estimate collapses to zero); unit variance keeps the
        # predictive deviation usable for exploration without changing its
        # argmax structure
        sigma2 = 1.0
    else:
        sigma2 = max(float(resid @ w) / k, 0.0)
    log_det = 2.0 * float(np.log(np.diag(L)).sum())
    return GpModel(
        X=_freeze(X),
        f=_freeze(f),
        lam=_freeze(lam),
        chol=_freeze(L),
        nugget=nugget,
        b=b,
        sigma2=sigma2,
        w=_freeze(w),
        rinv1=_freeze(rinv1),
        s11=s11,
        log_det=log_det,
    )


def predict(m: GpModel, x: np.ndarray) -> tuple[float, float]:
    """Mean and pointwise standard deviation at one query point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.p,):
        raise ValueError(f"query point must have shape ({m.p},)")
    mean, sd = _kernels.predict_batch(
        x[None, :], m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b, m.sigma2
    )
    return float(mean[0]), float(sd[0])


def predict_batch(m: GpModel, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation at each query row."""
    return _kernels.predict_batch(
        Xq, m.X, m.lam, m.chol, m.w, m.rinv1, m.s11, m.b, m.sigma2
    )


def nll_objective(m: GpModel) -> float:
    """The likelihood criterion minimized by ``mle_lambda``:
    k*log(sigma) + 0.5*log|R|, computed from the stored factorization."""
    if m.sigma2 <= 0.0:
        raise DegenerateDataError("zero-variance objective values")
    return 0.5 * (m.k * float(np.log(m.sigma2)) + m.log_det)


def mle_lambda(X: np.ndarray, f: np.ndarray, grid) -> np.ndarray:
    """Pick the grid member minimizing the likelihood criterion.

    Ties break toward the lexicographically smaller candidate. Candidates
    whose correlation matrix cannot be factorized are skipped; if all fail,
    the last fit error propagates.
    """
    grid = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grid]
    if not grid:
        raise ValueError("candidate grid is empty")
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if float(np.ptp(f)) == 0.0:
        raise DegenerateDataError(
            "objective values are all equal; likelihood objective is unbounded"
        )
    best_key: tuple | None = None
    best_lam: np.ndarray | None = None
    last_err: GpFitError | None = None
    for cand in grid:
        try:
            m = fit(X, f, cand)
        except GpFitError as exc:
            last_err = exc
            continue
        key = (nll_objective(m), tuple(cand))
        if best_key is None or key < best_key:
            best_key = key
            best_lam = cand
    if best_lam is None:
        assert last_err is not None
        raise last_err
    return best_lam


def sample_function_values(
    X: np.ndarray, lam: np.ndarray, seed: int, *, mean: float = 0.0, scale: float = 1.0
) -> np.ndarray:
    """Draw one joint realization of the surrogate prior at rows of ``X``.

    Test helper for recovery experiments: data generated with a known weight
    vector should make that vector win the likelihood scan.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = _correlation(X, np.atleast_1d(np.asarray(lam, dtype=float)))
    L = cholesky(R + 1e-10 * np.eye(X.shape[0]), lower=True, check_finite=False)
    z = seeded_rng(seed, 0x6D).standard_normal(X.shape[0])
    return mean + scale * (L @ z)
