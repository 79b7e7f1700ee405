"""Random designs and partition-function estimators.

The two log-partition estimators normalize the Boltzmann densities used by
the inverse fit: a plain Monte-Carlo average for the exploration density,
and a two-population (uniform + narrow normal) balance estimator for the
merit density, whose integrand concentrates sharply around the observed
sample. Everything accumulates in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import SearchSpace

__all__ = [
    "ProposalConfig",
    "lhs",
    "max_min_distance",
    "min_distances",
    "z_bo_hat",
    "z_ini_hat",
    "BalanceSamples",
    "draw_balance_samples",
    "log_z_from_values",
]

_LOG_2PI = 1.8378770664093453


@dataclass(frozen=True)
class ProposalConfig:
    """Importance-sampling proposal: spread and center of the normal
    population plus the two population sizes.

    ``sigma_i`` is expressed in normalized units. ``mu`` is a default center;
    estimator calls that know the trajectory point pass it explicitly.
    """

    sigma_i: float = 0.01
    n_uniform: int = 5000
    n_normal: int = 5000
    mu: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma_i <= 0:
            raise ValueError("sigma_i must be positive")
        if self.n_uniform < 1:
            raise ValueError("need at least one uniform sample")
        if self.n_normal < 0:
            raise ValueError("n_normal must be nonnegative")


def lhs(space: SearchSpace, n: int, seed) -> np.ndarray:
    """Latin hypercube design: per axis, one point in each of n equal strata,
    jittered uniformly within its stratum. Deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, space.p))
    for d in range(space.p):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        out[:, d] = space.lower[d] + (perm + jitter) / n * space.widths[d]
    return out


def max_min_distance(x: np.ndarray, X_prev: np.ndarray) -> float:
    """Minimum Euclidean distance from ``x`` to the rows of ``X_prev``."""
    X_prev = np.atleast_2d(np.asarray(X_prev, dtype=float))
    if X_prev.shape[0] == 0:
        raise ValueError("X_prev must be nonempty")
    diff = X_prev - np.asarray(x, dtype=float)
    return float(np.sqrt((diff * diff).sum(axis=1).min()))


def min_distances(Xq: np.ndarray, X_prev: np.ndarray) -> np.ndarray:
    """Row-wise minimum Euclidean distance from ``Xq`` to ``X_prev``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    X_prev = np.atleast_2d(np.asarray(X_prev, dtype=float))
    a = (Xq * Xq).sum(axis=1)
    c = (X_prev * X_prev).sum(axis=1)
    d2 = a[:, None] + c[None, :] - 2.0 * (Xq @ X_prev.T)
    np.clip(d2, 0.0, None, out=d2)
    return np.sqrt(d2.min(axis=1))


@dataclass(frozen=True)
class BalanceSamples:
    """Frozen draw for the two-population estimator.

    ``log_wu``/``log_wn`` are the log balance weights (volume over population
    size over one-plus-density-ratio); ``xn_eval`` holds the normal draws
    projected onto the box, which is where the integrand is evaluated, while
    the weight uses the unprojected density.
    """

    xu: np.ndarray
    xn: np.ndarray
    xn_eval: np.ndarray
    log_wu: np.ndarray
    log_wn: np.ndarray


def _log_normal_density(X: np.ndarray, mu: np.ndarray, sigma: float) -> np.ndarray:
    diff = X - mu
    sq = (diff * diff).sum(axis=1)
    p = X.shape[1]
    return -0.5 * p * _LOG_2PI - p * np.log(sigma) - sq / (2.0 * sigma * sigma)


def draw_balance_samples(
    space: SearchSpace, mu: np.ndarray, cfg: ProposalConfig, seed
) -> BalanceSamples:
    """Draw the uniform and normal populations and precompute their log
    balance weights. With ``n_normal == 0`` the estimator degenerates to the
    plain uniform Monte-Carlo average (the density ratio term drops out)."""
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu, dtype=float)
    log_d = space.log_volume
    xu = rng.uniform(space.lower, space.upper, size=(cfg.n_uniform, space.p))
    if cfg.n_normal > 0:
        xn = mu + cfg.sigma_i * rng.standard_normal((cfg.n_normal, space.p))
        xn_eval = space.clip(xn)
        # 1 + D*q in the log domain; q evaluated at the unprojected draw
        log_wu = log_d - np.log(cfg.n_uniform) - np.logaddexp(
            0.0, log_d + _log_normal_density(xu, mu, cfg.sigma_i)
        )
        log_wn = log_d - np.log(cfg.n_normal) - np.logaddexp(
            0.0, log_d + _log_normal_density(xn, mu, cfg.sigma_i)
        )
    else:
        xn = np.empty((0, space.p))
        xn_eval = xn
        log_wu = np.full(cfg.n_uniform, log_d - np.log(cfg.n_uniform))
        log_wn = np.empty(0)
    return BalanceSamples(xu=xu, xn=xn, xn_eval=xn_eval, log_wu=log_wu, log_wn=log_wn)


def log_z_from_values(samples: BalanceSamples, gu: np.ndarray, gn: np.ndarray) -> float:
    """Log of the balance estimate given log-integrand values at the two
    populations (``gu``/``gn`` are the exponents, e.g. alpha * merit)."""
    return float(
        logsumexp(np.concatenate([samples.log_wu + gu, samples.log_wn + gn]))
    )


def z_bo_hat(
    ei: Callable[[np.ndarray], np.ndarray],
    alpha_bo: float,
    space: SearchSpace,
    mu: np.ndarray,
    cfg: ProposalConfig,
    seed,
) -> float:
    """Log of the estimated integral of exp(alpha_bo * ei(x)) over the box.

    ``ei`` must accept an (n, p) array and return (n,) values. Normal draws
    landing outside the box contribute the integrand at their boundary
    projection; their weight keeps the unprojected density (the narrow
    proposal makes the boundary mass negligible).
    """
    if alpha_bo < 0:
        raise ValueError("alpha_bo must be nonnegative")
    samples = draw_balance_samples(space, mu, cfg, seed)
    gu = alpha_bo * np.asarray(ei(samples.xu), dtype=float)
    gn = alpha_bo * np.asarray(ei(samples.xn_eval), dtype=float) if cfg.n_normal else np.empty(0)
    return log_z_from_values(samples, gu, gn)


def z_ini_hat(
    d_fn: Callable[[np.ndarray], np.ndarray],
    alpha_ini: float,
    space: SearchSpace,
    n: int,
    seed,
) -> float:
    """Log of the estimated integral of exp(alpha_ini * d_fn(x)) over the box,
    by a uniform log-mean-exp; exact (= log volume) when alpha_ini is zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    xu = rng.uniform(space.lower, space.upper, size=(n, space.p))
    vals = alpha_ini * np.asarray(d_fn(xu), dtype=float)
    log_mean = logsumexp(vals) - np.log(n)  # exactly 0 for a zero exponent
    return float(space.log_volume + log_mean)
