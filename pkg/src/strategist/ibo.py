"""Inverse fit of forward-search parameters to an observed trajectory.

The cost of a trajectory splits into an exploration part (samples assumed to
chase max-min spread) and a search part (samples assumed to chase expected
improvement); both are negative log densities of Boltzmann models, each
normalized by an estimated partition integral. The split index is scanned,
and the kernel weights are recovered either over a grid or by bounded
multistart descent.

All computation runs in the normalized [-1, 1]^p box: inputs are mapped
there internally and candidate/estimated kernel weights are expressed in the
trajectory's original units (the kernel is affine-invariant under the paired
transformation, so merit values are unchanged).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import gp
from .core import IboEstimate, SearchSpace, Trajectory, normalize_trajectory, seeded_rng
from .sampling import (
    BalanceSamples,
    ProposalConfig,
    draw_balance_samples,
    lhs,
    log_z_from_values,
    max_min_distance,
    min_distances,
)

__all__ = [
    "IboConfig",
    "InsufficientTrajectoryError",
    "CostResult",
    "CostCell",
    "TermTables",
    "l_ini_term",
    "l_bo_term",
    "total_cost",
    "estimate_grid",
    "estimate_continuous",
    "build_term_tables",
    "cost_at_prefix",
    "write_cost_table",
]

# seed stream tags
_S_INI = 0x11
_S_BO = 0x12
_S_START = 0x13
_S_FINAL = 0x14

_DESCENT_MAXITER = 40


class InsufficientTrajectoryError(ValueError):
    """Too few samples to constrain the estimate (no search term exists)."""


def _default_lambda_grid(p: int) -> list[np.ndarray]:
    return [np.full(p, v) for v in (0.01, 0.1, 1.0, 10.0)]


@dataclass(frozen=True)
class IboConfig:
    """Estimation settings: rationality grids, kernel-weight candidates or
    bounds, descent budget, and partition-estimation sizes."""

    alpha_bo_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    alpha_ini_values: tuple[float, ...] = (1.0, 10.0)
    lambda_grid: Sequence[np.ndarray] | None = None
    lambda_bounds: tuple[float, float] = (0.01, 10.0)
    n_restarts: int = 10
    fd_step: float = 1e-3
    k0_fixed: int | None = None
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    n_ini: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.alpha_bo_grid or not self.alpha_ini_values:
            raise ValueError("rationality grids must be nonempty")
        if any(a < 0 for a in self.alpha_bo_grid + self.alpha_ini_values):
            raise ValueError("rationality values must be nonnegative")
        lo, hi = self.lambda_bounds
        if not 0 < lo <= hi:
            raise ValueError("lambda_bounds lower bound must be positive")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")

    def lambda_candidates(self, p: int) -> list[np.ndarray]:
        if self.lambda_grid is not None:
            return [np.atleast_1d(np.asarray(g, dtype=float)) for g in self.lambda_grid]
        return _default_lambda_grid(p)


@dataclass(frozen=True)
class _Working:
    """Trajectory mapped to the normalized box, with the squared-half-width
    factors that convert kernel weights between unit systems."""

    Xn: np.ndarray
    f: np.ndarray
    space: SearchSpace
    lam_scale: np.ndarray


def _working(t: Trajectory) -> _Working:
    tn, tr = normalize_trajectory(t)
    return _Working(Xn=tn.X, f=tn.f, space=tn.space, lam_scale=tr.scale**2)


def l_ini_term(t: Trajectory, i: int, alpha_ini: float, seed, n: int = 10_000) -> float:
    """Exploration cost of sample ``i`` (1-based, i >= 2): minus the
    rationality-weighted spread gain plus the log normalized partition.
    Exactly zero at ``alpha_ini == 0`` (uniform sampling)."""
    if not 2 <= i <= len(t):
        raise ValueError(f"position {i} outside 2..{len(t)}")
    if alpha_ini < 0:
        raise ValueError("alpha_ini must be nonnegative")
    if alpha_ini == 0.0:
        return 0.0
    w = _working(t)
    x_i = w.Xn[i - 1]
    X_prev = w.Xn[: i - 1]
    d_i = max_min_distance(x_i, X_prev)
    rng = np.random.default_rng(seed)
    du = min_distances(
        rng.uniform(w.space.lower, w.space.upper, size=(n, w.space.p)), X_prev
    )
    log_z_over_d = float(logsumexp(alpha_ini * du) - np.log(n))
    return -alpha_ini * d_i + log_z_over_d


def l_bo_term(
    t: Trajectory,
    j: int,
    lam: np.ndarray,
    alpha_bo: float,
    cfg: ProposalConfig,
    seed,
) -> float:
    """Search cost of sample ``j`` (1-based, j >= 3): the surrogate is fit to
    the first j-1 samples, the merit of the observed point is compared with
    the estimated log partition. Exactly zero at ``alpha_bo == 0``."""
    if not 3 <= j <= len(t):
        raise ValueError(f"position {j} outside 3..{len(t)}")
    if alpha_bo < 0:
        raise ValueError("alpha_bo must be nonnegative")
    if alpha_bo == 0.0:
        return 0.0
    w = _working(t)
    lam_n = np.atleast_1d(np.asarray(lam, dtype=float)) * w.lam_scale
    model = gp.fit(w.Xn[: j - 1], w.f[: j - 1], lam_n)
    x_j = w.Xn[j - 1]
    samples = draw_balance_samples(w.space, x_j, cfg, seed)
    ei_all = _ei_at(model, np.vstack([samples.xu, samples.xn_eval, x_j[None, :]]))
    nu = cfg.n_uniform
    log_z = log_z_from_values(
        samples, alpha_bo * ei_all[:nu], alpha_bo * ei_all[nu:-1]
    )
    return float(-alpha_bo * ei_all[-1] + log_z - w.space.log_volume)


def _ei_at(model: gp.GpModel, Xq: np.ndarray) -> np.ndarray:
    from .acquisition import expected_improvement_batch

    return expected_improvement_batch(model, model.f_min, Xq)


@dataclass(frozen=True)
class TermTables:
    """Per-sample cost terms shared by every split, prefix, and grid cell.

    ``ini[a, i]`` is the exploration term of position i under the a-th
    rationality value; ``bo[l, a, j]`` the search term of position j under
    the l-th weight candidate and a-th rationality value. Index 0 and unused
    leading positions are zero.
    """

    T: int
    alpha_ini_values: tuple[float, ...]
    alpha_bo_grid: tuple[float, ...]
    lambda_grid: list[np.ndarray]
    ini: np.ndarray
    bo: np.ndarray

    def cum_ini(self) -> np.ndarray:
        return np.cumsum(self.ini, axis=1)

    def cum_bo(self) -> np.ndarray:
        return np.cumsum(self.bo, axis=2)


def build_term_tables(t: Trajectory, cfg: IboConfig, seed: int | None = None) -> TermTables:
    """Evaluate every exploration and search term once.

    Partition draws are shared across weight candidates and rationality
    values (common random numbers), so grid cells differ only through the
    model, not through sampling noise.
    """
    T = len(t)
    root = cfg.seed if seed is None else seed
    w = _working(t)
    lam_grid = cfg.lambda_candidates(t.space.p)
    a_ini = tuple(cfg.alpha_ini_values)
    a_bo = tuple(cfg.alpha_bo_grid)

    ini = np.zeros((len(a_ini), T + 1))
    for i in range(2, T + 1):
        X_prev = w.Xn[: i - 1]
        d_i = max_min_distance(w.Xn[i - 1], X_prev)
        rng = seeded_rng(root, _S_INI, i)
        du = min_distances(
            rng.uniform(w.space.lower, w.space.upper, size=(cfg.n_ini, w.space.p)),
            X_prev,
        )
        for a, alpha in enumerate(a_ini):
            if alpha == 0.0:
                continue
            ini[a, i] = -alpha * d_i + float(logsumexp(alpha * du) - np.log(cfg.n_ini))

    bo = np.zeros((len(lam_grid), len(a_bo), T + 1))
    log_d = w.space.log_volume
    nu = cfg.proposal.n_uniform
    for j in range(3, T + 1):
        x_j = w.Xn[j - 1]
        samples = draw_balance_samples(
            w.space, x_j, cfg.proposal, seeded_rng(root, _S_BO, j)
        )
        pts = np.vstack([samples.xu, samples.xn_eval, x_j[None, :]])
        for li, lam in enumerate(lam_grid):
            model = gp.fit(w.Xn[: j - 1], w.f[: j - 1], lam * w.lam_scale)
            ei_all = _ei_at(model, pts)
            for a, alpha in enumerate(a_bo):
                if alpha == 0.0:
                    continue
                log_z = log_z_from_values(
                    samples, alpha * ei_all[:nu], alpha * ei_all[nu:-1]
                )
                bo[li, a, j] = -alpha * ei_all[-1] + log_z - log_d
    return TermTables(
        T=T, alpha_ini_values=a_ini, alpha_bo_grid=a_bo, lambda_grid=lam_grid,
        ini=ini, bo=bo,
    )


def scan_k0(
    ini_terms: np.ndarray, bo_terms: np.ndarray, prefix: int, k0_fixed: int | None = None
) -> tuple[float, int]:
    """Best split of a prefix: exploration terms up to and including the
    split, search terms after it. Ties go to the smaller split."""
    if prefix < 2:
        raise ValueError("prefix must be >= 2")
    cum_ini = np.cumsum(ini_terms[: prefix + 1])
    cum_bo = np.cumsum(bo_terms[: prefix + 1])
    if k0_fixed is not None:
        if not 2 <= k0_fixed <= prefix:
            raise ValueError(f"k0 {k0_fixed} outside 2..{prefix}")
        return float(cum_ini[k0_fixed] + cum_bo[prefix] - cum_bo[k0_fixed]), k0_fixed
    k0s = np.arange(2, prefix + 1)
    costs = cum_ini[k0s] + (cum_bo[prefix] - cum_bo[k0s])
    best = int(np.argmin(costs))
    return float(costs[best]), int(k0s[best])


def cost_at_prefix(
    tables: TermTables, prefix: int, li: int, ai_bo: int, ai_ini: int,
    k0_fixed: int | None = None,
) -> tuple[float, int]:
    return scan_k0(tables.ini[ai_ini], tables.bo[li, ai_bo], prefix, k0_fixed)


@dataclass(frozen=True)
class CostResult:
    cost: float
    k0: int
    ini_terms: dict[int, float]
    bo_terms: dict[int, float]


def total_cost(
    t: Trajectory,
    lam: np.ndarray,
    alpha_ini: float,
    alpha_bo: float,
    cfg: IboConfig,
    seed: int | None = None,
) -> CostResult:
    """Cost of the whole trajectory at one parameter setting, with the split
    scanned (or pinned by ``cfg.k0_fixed``) and all terms returned."""
    T = len(t)
    if T < 3 and cfg.k0_fixed is None:
        raise InsufficientTrajectoryError(
            f"need at least 3 samples to scan the split (got {T})"
        )
    single = replace(
        cfg,
        alpha_ini_values=(alpha_ini,),
        alpha_bo_grid=(alpha_bo,),
        lambda_grid=[np.atleast_1d(np.asarray(lam, dtype=float))],
    )
    tables = build_term_tables(t, single, seed=seed)
    cost, k0 = cost_at_prefix(tables, T, 0, 0, 0, cfg.k0_fixed)
    return CostResult(
        cost=cost,
        k0=k0,
        ini_terms={i: float(tables.ini[0, i]) for i in range(2, T + 1)},
        bo_terms={j: float(tables.bo[0, 0, j]) for j in range(3, T + 1)},
    )


@dataclass(frozen=True)
class CostCell:
    """One row of the reporting table emitted alongside grid estimates."""

    lambda_label: str
    alpha_bo: float
    alpha_ini: float
    prefix_len: int
    k0: int
    cost: float


def lambda_label(lam: np.ndarray) -> str:
    lam = np.atleast_1d(lam)
    if np.all(lam == lam[0]):
        return repr(float(lam[0]))
    return ";".join(repr(float(v)) for v in lam)


def write_cost_table(cells: Sequence[CostCell], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "alpha_bo", "alpha_ini", "prefix_len", "k0", "cost"])
        for c in cells:
            writer.writerow(
                [c.lambda_label, repr(c.alpha_bo), repr(c.alpha_ini), c.prefix_len, c.k0, repr(c.cost)]
            )


def estimate_grid(t: Trajectory, cfg: IboConfig) -> IboEstimate:
    """Exhaustive scan of weight candidates x rationality grids, with the
    split scanned per cell; returns the minimizer at the full trajectory
    length with the per-prefix cost table attached."""
    T = len(t)
    if T < 3:
        raise InsufficientTrajectoryError(
            f"need at least 3 samples to fit the search stage (got {T})"
        )
    tables = build_term_tables(t, cfg)
    cells: list[CostCell] = []
    best = None  # (cost, li, ab, ai, k0)
    for li, lam in enumerate(tables.lambda_grid):
        label = lambda_label(lam)
        for ab, alpha_bo in enumerate(tables.alpha_bo_grid):
            for ai, alpha_ini in enumerate(tables.alpha_ini_values):
                for prefix in range(3, T + 1):
                    cost, k0 = cost_at_prefix(tables, prefix, li, ab, ai, cfg.k0_fixed)
                    cells.append(
                        CostCell(label, alpha_bo, alpha_ini, prefix, k0, cost)
                    )
                    if prefix == T and (best is None or cost < best[0]):
                        best = (cost, li, ab, ai, k0)
    assert best is not None
    cost, li, ab, ai, k0 = best
    return IboEstimate(
        lambda_hat=tables.lambda_grid[li],
        alpha_bo_hat=tables.alpha_bo_grid[ab],
        alpha_ini_hat=tables.alpha_ini_values[ai],
        k0_hat=k0,
        cost=cost,
        ini_terms={i: float(tables.ini[ai, i]) for i in range(2, T + 1)},
        bo_terms={j: float(tables.bo[li, ab, j]) for j in range(3, T + 1)},
        table=cells,
    )


class _DescentObjective:
    """Search-stage cost (positions ``j_start``..T) as a function of raw-unit
    kernel weights, with the partition draws frozen per descent so line
    searches see a deterministic function."""

    def __init__(
        self,
        w: _Working,
        alpha_bo: float,
        proposal: ProposalConfig,
        seeds,
        j_start: int = 3,
        frozen: list[tuple[int, BalanceSamples, np.ndarray]] | None = None,
    ):
        self.w = w
        self.alpha = alpha_bo
        self.nu = proposal.n_uniform
        if frozen is not None:
            self.frozen = frozen
            return
        self.frozen = []
        for j in range(max(3, j_start), w.Xn.shape[0] + 1):
            x_j = w.Xn[j - 1]
            samples = draw_balance_samples(w.space, x_j, proposal, seeds(j))
            pts = np.vstack([samples.xu, samples.xn_eval, x_j[None, :]])
            self.frozen.append((j, samples, pts))

    def term(self, j: int, samples: BalanceSamples, pts: np.ndarray, lam_n: np.ndarray) -> float:
        if self.alpha == 0.0:
            return 0.0
        model = gp.fit(self.w.Xn[: j - 1], self.w.f[: j - 1], lam_n)
        ei_all = _ei_at(model, pts)
        log_z = log_z_from_values(
            samples, self.alpha * ei_all[: self.nu], self.alpha * ei_all[self.nu : -1]
        )
        return float(-self.alpha * ei_all[-1] + log_z - self.w.space.log_volume)

    def __call__(self, lam_raw: np.ndarray) -> float:
        if self.alpha == 0.0:
            return 0.0
        lam_n = lam_raw * self.w.lam_scale
        return sum(self.term(j, s, pts, lam_n) for j, s, pts in self.frozen)


def _fd_grad(fn, x: np.ndarray, step: float, lo: float, hi: float) -> tuple[float, np.ndarray]:
    """Central differences, falling back to one-sided at the box edges."""
    f0 = fn(x)
    grad = np.empty_like(x)
    for d in range(x.shape[0]):
        h_plus = min(step, hi - x[d])
        h_minus = min(step, x[d] - lo)
        if h_plus <= 0 and h_minus <= 0:
            grad[d] = 0.0
            continue
        xp, xm = x.copy(), x.copy()
        xp[d] += h_plus
        xm[d] -= h_minus
        fp = fn(xp) if h_plus > 0 else f0
        fm = fn(xm) if h_minus > 0 else f0
        grad[d] = (fp - fm) / (h_plus + h_minus)
    return f0, grad


def estimate_continuous(t: Trajectory, cfg: IboConfig) -> IboEstimate:
    """Bounded multistart descent over the kernel-weight box, one run per
    rationality value and restart; the exploration split is pinned (default:
    minimal). Candidates are compared under one canonical partition draw; if
    no descent beats the best reference grid point, that reference is
    returned with ``improved=False``."""
    T = len(t)
    if T < 3:
        raise InsufficientTrajectoryError(
            f"need at least 3 samples to fit the search stage (got {T})"
        )
    k0 = cfg.k0_fixed if cfg.k0_fixed is not None else 2
    if not 2 <= k0 <= T:
        raise ValueError(f"k0 {k0} outside 2..{T}")
    w = _working(t)
    p = t.space.p
    lo, hi = cfg.lambda_bounds

    # exploration part: constant in the descent variables
    ini_by_alpha = {}
    ini_terms_by_alpha = {}
    for alpha in cfg.alpha_ini_values:
        terms = {
            i: l_ini_term(t, i, alpha, seeded_rng(cfg.seed, _S_INI, i), n=cfg.n_ini)
            for i in range(2, k0 + 1)
        }
        ini_terms_by_alpha[alpha] = terms
        ini_by_alpha[alpha] = sum(terms.values())
    alpha_ini_hat = min(cfg.alpha_ini_values, key=lambda a: (ini_by_alpha[a], a))
    ini_cost = ini_by_alpha[alpha_ini_hat]

    j_start = k0 + 1
    shared = _DescentObjective(
        w, 0.0, cfg.proposal, lambda j: seeded_rng(cfg.seed, _S_FINAL, j),
        j_start=j_start,
    )
    canonical = {
        alpha: _DescentObjective(
            w, alpha, cfg.proposal, None, j_start=j_start, frozen=shared.frozen
        )
        for alpha in cfg.alpha_bo_grid
    }

    # reference points: the grid candidates, clipped into the bounds
    references: list[tuple[float, np.ndarray, float]] = []
    for lam in cfg.lambda_candidates(p):
        lam_c = np.clip(lam, lo, hi)
        for alpha in cfg.alpha_bo_grid:
            references.append((canonical[alpha](lam_c), lam_c, alpha))
    ref_cost, ref_lam, ref_alpha = min(references, key=lambda r: r[0])

    bounds = [(lo, hi)] * p
    log_lo, log_hi = np.log(lo), np.log(hi)
    best: tuple[float, np.ndarray, float] | None = None
    for ab, alpha in enumerate(cfg.alpha_bo_grid):
        if alpha == 0.0:
            continue
        for restart in range(cfg.n_restarts):
            obj = _DescentObjective(
                w, alpha, cfg.proposal,
                lambda j, _ab=ab, _r=restart: seeded_rng(cfg.seed, _S_BO, _ab, _r, j),
                j_start=j_start,
            )
            start_rng = seeded_rng(cfg.seed, _S_START, ab, restart)
            lam0 = np.exp(start_rng.uniform(log_lo, log_hi, size=p))
            res = minimize(
                lambda lam_vec: _fd_grad(obj, lam_vec, cfg.fd_step, lo, hi),
                lam0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": _DESCENT_MAXITER},
            )
            lam_star = np.clip(res.x, lo, hi)
            cost_star = canonical[alpha](lam_star)
            if best is None or cost_star < best[0]:
                best = (cost_star, lam_star, alpha)

    improved = best is not None and best[0] < ref_cost
    bo_cost, lam_hat, alpha_bo_hat = best if improved else (ref_cost, ref_lam, ref_alpha)

    obj = canonical[alpha_bo_hat]
    lam_n = lam_hat * w.lam_scale
    final_terms = {j: obj.term(j, s, pts, lam_n) for j, s, pts in obj.frozen}

    return IboEstimate(
        lambda_hat=lam_hat,
        alpha_bo_hat=alpha_bo_hat,
        alpha_ini_hat=alpha_ini_hat,
        k0_hat=k0,
        cost=ini_cost + sum(final_terms.values()),
        ini_terms={i: float(v) for i, v in ini_terms_by_alpha[alpha_ini_hat].items()},
        bo_terms=final_terms,
        improved=improved,
    )
