"""Numpy implementation of the surrogate prediction / merit kernels.

This is the reference backend: the compiled extension in ``_fast.pyx``
implements the same three entry points and must agree with these within
floating-point reassociation error. Everything here is pure and operates on
pre-factorized model state (see ``strategist.gp.GpModel``):

``X``      k x p training inputs
``lam``    length-p positive kernel decay weights
``chol``   lower Cholesky factor of the (nugget-regularized) correlation matrix
``w``      solve(R, f - b)
``rinv1``  solve(R, ones)
``s11``    ones @ rinv1
``b``      generalized least-squares mean
``sigma2`` process variance estimate
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

_INV_SQRT_2PI = 0.3989422804014327
_SQRT_2 = 1.4142135623730951


def _norm_cdf(z):
    from scipy.special import erf

    return 0.5 * (1.0 + erf(z / _SQRT_2))


def _weighted_sqdist(Xq: np.ndarray, X: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # (xq - x)' diag(lam) (xq - x) expanded into three GEMM-friendly pieces
    a = (Xq * Xq) @ lam
    c = (X * X) @ lam
    cross = (Xq * lam) @ X.T
    d2 = a[:, None] + c[None, :] - 2.0 * cross
    np.clip(d2, 0.0, None, out=d2)
    return d2


def predict_batch(Xq, X, lam, chol, w, rinv1, s11, b, sigma2):
    """Surrogate mean and pointwise standard deviation at query rows.

    The variance uses the constant-trend correction term, so it vanishes at
    training inputs (up to nugget scale) and exceeds the plain conditional
    variance far from data.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Rq = np.exp(-_weighted_sqdist(Xq, X, lam))
    mean = b + Rq @ w
    t = solve_triangular(chol, Rq.T, lower=True, check_finite=False)
    r_rinv_r = np.einsum("ij,ij->j", t, t)
    u = 1.0 - Rq @ rinv1
    var_factor = 1.0 - r_rinv_r + (u * u) / s11
    np.clip(var_factor, 0.0, None, out=var_factor)
    sd = np.sqrt(sigma2 * var_factor)
    return mean, sd


def ei_batch(Xq, X, lam, chol, w, rinv1, s11, b, sigma2, f_min):
    """Expected improvement below ``f_min`` at query rows; nonnegative."""
    mean, sd = predict_batch(Xq, X, lam, chol, w, rinv1, s11, b, sigma2)
    gap = f_min - mean
    out = np.maximum(gap, 0.0)
    pos = sd > 0.0
    if np.any(pos):
        z = gap[pos] / sd[pos]
        with np.errstate(under="ignore"):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
            out[pos] = gap[pos] * _norm_cdf(z) + sd[pos] * pdf
    np.clip(out, 0.0, None, out=out)
    return out


def ei_point_and_grad(x, X, lam, chol, w, rinv1, s11, b, sigma2, f_min, steps):
    """EI at ``x`` plus its central-finite-difference gradient.

    ``steps`` holds the per-axis half-steps. The 2p+1 evaluations go through
    one batched call; the stencil ordering (base, then +h/-h per axis) is the
    contract shared with the compiled backend.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[0]
    pts = np.tile(x, (2 * p + 1, 1))
    idx = np.arange(p)
    pts[1 + 2 * idx, idx] += steps
    pts[2 + 2 * idx, idx] -= steps
    ei = ei_batch(pts, X, lam, chol, w, rinv1, s11, b, sigma2, f_min)
    grad = (ei[1::2] - ei[2::2]) / (2.0 * steps)
    return float(ei[0]), grad
