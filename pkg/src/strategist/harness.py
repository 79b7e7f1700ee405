"""Simulation studies: parameter recovery from synthetic trajectories and
the transfer-versus-self-adaptation comparison, with bootstrap bands.

Studies are bit-reproducible from (config, seed): every trial and arm draws
from its own seed stream keyed by index, so results do not depend on worker
scheduling. Heavy trials fan out over a process pool.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, gp
from .acquisition import maximize_ei, run_bo
from .core import BoParams, SearchSpace, Trajectory, save_trajectory, seeded_rng
from .ibo import IboConfig, build_term_tables, estimate_grid, scan_k0
from .objectives import rosenbrock
from .sampling import lhs

__all__ = [
    "StudyConfig",
    "RecoveryReport",
    "TransferReport",
    "bootstrap_ci",
    "recovery_study",
    "transfer_study",
]

# seed stream tags (kept distinct from the ibo module's)
_S_INIT = 0x21
_S_RUN = 0x22
_S_DONOR = 0x23
_S_BOOT = 0x24

ARMS = ("fixed_low", "fixed_high", "self_adaptive", "ibo_transfer")


@dataclass(frozen=True)
class StudyConfig:
    """Shared settings for both studies. ``lambda_cases`` are isotropic
    weight scalars; candidate weights for the inverse fit come from ``ibo``."""

    dim: int = 30
    bound: float = 2.0
    lambda_cases: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    trials: int = 30
    prefix_lengths: tuple[int, ...] = tuple(range(5, 21))
    bo_init: int = 10
    ei_tolerance: float = 1e-3
    n_starts: int = 100
    n_bootstrap: int = 5000
    transfer_iterations: int = 50
    donor_length: int = 20
    seed: int = 0
    workers: int = 0
    ibo: IboConfig = field(default_factory=IboConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.bo_init < 2:
            raise ValueError("bo_init must be >= 2")

    @classmethod
    def smoke(cls, seed: int = 0) -> "StudyConfig":
        """Desk-scale preset that exercises the full pipeline in seconds."""
        from .sampling import ProposalConfig

        return cls(
            dim=2,
            trials=2,
            prefix_lengths=(5, 6, 7, 8),
            n_starts=20,
            n_bootstrap=500,
            transfer_iterations=8,
            donor_length=12,
            seed=seed,
            ibo=IboConfig(
                proposal=ProposalConfig(n_uniform=500, n_normal=500), n_ini=1000
            ),
        )

    @property
    def space(self) -> SearchSpace:
        return SearchSpace(np.full(self.dim, -self.bound), np.full(self.dim, self.bound))

    @property
    def max_prefix(self) -> int:
        return max(self.prefix_lengths)

    def pool_size(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def bootstrap_ci(samples, n_boot: int, seed) -> tuple[float, float, float]:
    """Sample mean with a one-sigma band from ``n_boot`` resampled means
    (band half-width = standard deviation of the resampled means)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, samples.size, size=(n_boot, samples.size))
    means = samples[idx].mean(axis=1)
    mean = float(samples.mean())
    sd = float(means.std())
    return mean, mean - sd, mean + sd


def _evaluate_rows(X: np.ndarray) -> np.ndarray:
    return np.asarray(rosenbrock(X), dtype=float)


def _initial_trajectory(cfg: StudyConfig, trial: int) -> Trajectory:
    X0 = lhs(cfg.space, cfg.bo_init, seeded_rng(cfg.seed, _S_INIT, trial))
    return Trajectory(cfg.space, X0, _evaluate_rows(X0))


def _case_params(cfg: StudyConfig, lam_scalar: float) -> BoParams:
    return BoParams(
        lam=np.full(cfg.dim, lam_scalar),
        ei_tolerance=cfg.ei_tolerance,
        n_starts=cfg.n_starts,
    )


def _grow_to(cfg: StudyConfig, initial: Trajectory, lam_scalar: float,
             target_len: int, stream: tuple[int, ...]) -> Trajectory:
    run = run_bo(
        initial,
        _case_params(cfg, lam_scalar),
        rosenbrock,
        max_iter=max(0, target_len - len(initial)),
        seed=(cfg.seed, *stream),
    )
    return run.trajectory


# ---------------------------------------------------------------------------
# recovery study


def _recovery_trial(payload) -> dict:
    cfg, case_idx, trial = payload
    case = cfg.lambda_cases[case_idx]
    target = max(cfg.max_prefix, cfg.bo_init)
    t = _grow_to(cfg, _initial_trajectory(cfg, trial), case, target,
                 (_S_RUN, case_idx, trial))
    tables = build_term_tables(t, cfg.ibo, seed=cfg.seed)
    n_lam = len(tables.lambda_grid)
    n_ab = len(tables.alpha_bo_grid)
    n_ai = len(tables.alpha_ini_values)
    costs = np.empty((len(cfg.prefix_lengths), n_lam, n_ai))
    for pi, prefix in enumerate(cfg.prefix_lengths):
        for li in range(n_lam):
            for ai in range(n_ai):
                costs[pi, li, ai] = min(
                    scan_k0(tables.ini[ai], tables.bo[li, ab], prefix)[0]
                    for ab in range(n_ab)
                )
    return {
        "trial": trial,
        "costs": costs,
        "ini": tables.ini,
        "trajectory": t,
    }


@dataclass
class RecoveryReport:
    cfg: StudyConfig
    candidate_labels: list[float]
    costs: dict[float, np.ndarray]  # case -> (trials, prefixes, candidates, alpha_ini)
    ini_terms: dict[float, np.ndarray]  # case -> (trials, alpha_ini, T+1)
    failures: dict[float, int]
    out_dir: Path

    def selection_rates(self, case: float, prefix: int) -> np.ndarray:
        """Fraction of trials in which each candidate attains the minimum
        (over candidates, rationality values fused) at ``prefix``."""
        pi = self.cfg.prefix_lengths.index(prefix)
        per_trial = self.costs[case][:, pi].min(axis=2)  # min over alpha_ini
        winners = per_trial.argmin(axis=1)
        return np.bincount(winners, minlength=len(self.candidate_labels)) / len(winners)

    def recovery_rate(self, case: float, prefix: int) -> float:
        if case not in self.candidate_labels:
            return float("nan")
        return float(self.selection_rates(case, prefix)[self.candidate_labels.index(case)])

    def mean_cost(self, case: float, prefix: int, candidate: float, alpha_ini: float) -> float:
        pi = self.cfg.prefix_lengths.index(prefix)
        li = self.candidate_labels.index(candidate)
        ai = self.cfg.ibo.alpha_ini_values.index(alpha_ini)
        return float(self.costs[case][:, pi, li, ai].mean())


def recovery_study(cfg: StudyConfig, out_dir) -> RecoveryReport:
    """Generate per-case trajectories, fit the full candidate grid to every
    prefix, and emit the mean-cost curves plus selection-rate summary."""
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    candidates = cfg.ibo.lambda_candidates(cfg.dim)
    candidate_labels = [float(c[0]) for c in candidates]
    costs: dict[float, np.ndarray] = {}
    ini_terms: dict[float, np.ndarray] = {}
    failures: dict[float, int] = {}
    for case_idx, case in enumerate(cfg.lambda_cases):
        payloads = [(cfg, case_idx, t) for t in range(cfg.trials)]
        results, failed = _run_pool(_recovery_trial, payloads, cfg.pool_size())
        failures[case] = failed
        if not results:
            raise RuntimeError(f"every trial failed for case {case}")
        costs[case] = np.stack([r["costs"] for r in results])
        ini_terms[case] = np.stack([r["ini"] for r in results])
        for r in results:
            save_trajectory(
                r["trajectory"],
                out / "trajectories" / f"case{case:g}_trial{r['trial']:02d}.json",
            )
    report = RecoveryReport(cfg, candidate_labels, costs, ini_terms, failures, out)
    _write_recovery_files(report)
    return report


def _write_recovery_files(report: RecoveryReport) -> None:
    cfg = report.cfg
    with open(report.out_dir / "curves.csv", "w") as fh:
        fh.write("case,prefix_len,lambda_hat,alpha_ini,mean_L,sd_L\n")
        for case in cfg.lambda_cases:
            arr = report.costs[case]
            for pi, prefix in enumerate(cfg.prefix_lengths):
                for li, cand in enumerate(report.candidate_labels):
                    for ai, alpha in enumerate(cfg.ibo.alpha_ini_values):
                        vals = arr[:, pi, li, ai]
                        sd = float(vals.std(ddof=1 if len(vals) > 1 else 0))
                        fh.write(
                            f"{case:g},{prefix},{cand:g},{alpha:g},"
                            f"{float(vals.mean())!r},{sd!r}\n"
                        )
    with open(report.out_dir / "recovery.csv", "w") as fh:
        fh.write("case,prefix_len,recovery_rate\n")
        for case in cfg.lambda_cases:
            for prefix in cfg.prefix_lengths:
                fh.write(f"{case:g},{prefix},{report.recovery_rate(case, prefix)!r}\n")
    _write_meta(report.out_dir, cfg, {"failures": {f"{k:g}": v for k, v in report.failures.items()}})


# ---------------------------------------------------------------------------
# transfer study


def _self_adaptive_run(cfg: StudyConfig, initial: Trajectory, trial: int) -> dict:
    """Re-pick the weight scalar by the likelihood criterion each iteration;
    the first sample uses a per-trial cycled initial guess."""
    grid = [np.full(cfg.dim, v) for v in cfg.lambda_cases]
    lam = grid[trial % len(grid)]
    X = list(initial.X)
    f = list(initial.f)
    best_curve = [min(f)]
    selected: list[float] = []
    for it in range(cfg.transfer_iterations):
        if it > 0:
            lam = gp.mle_lambda(np.vstack(X), np.asarray(f), grid)
        selected.append(float(lam[0]))
        model = gp.fit(np.vstack(X), np.asarray(f), lam)
        res = maximize_ei(
            model, model.f_min, cfg.space, cfg.n_starts,
            seeded_rng(cfg.seed, _S_RUN, 2, trial, it),
        )
        fval = float(rosenbrock(res.x))
        X.append(res.x)
        f.append(fval)
        best_curve.append(min(best_curve[-1], fval))
    return {"best_curve": np.asarray(best_curve), "selected": selected}


def _transfer_trial(payload) -> dict:
    cfg, trial = payload
    initial = _initial_trajectory(cfg, trial)
    out: dict = {"trial": trial}

    fixed = {}
    for arm_idx, (arm, lam) in enumerate(
        [("fixed_low", cfg.lambda_cases[0]), ("fixed_high", cfg.lambda_cases[-1])]
    ):
        run = run_bo(
            initial,
            BoParams(np.full(cfg.dim, lam), cfg.ei_tolerance, cfg.n_starts),
            rosenbrock,
            max_iter=cfg.transfer_iterations,
            seed=(cfg.seed, _S_RUN, arm_idx, trial),
        )
        pad = cfg.transfer_iterations + 1 - len(run.best_curve)
        fixed[arm] = np.concatenate(
            [run.best_curve, np.full(pad, run.best_curve[-1])]
        )
    out["fixed_low"] = fixed["fixed_low"]
    out["fixed_high"] = fixed["fixed_high"]

    sa = _self_adaptive_run(cfg, initial, trial)
    out["self_adaptive"] = sa["best_curve"]
    out["selected"] = sa["selected"]

    # donor demonstration searched with the effective low setting, then the
    # weight vector is re-estimated from it and used from the start
    donor_X0 = lhs(cfg.space, cfg.bo_init, seeded_rng(cfg.seed, _S_DONOR, trial))
    donor_initial = Trajectory(cfg.space, donor_X0, _evaluate_rows(donor_X0))
    donor = _grow_to(
        cfg, donor_initial, cfg.lambda_cases[0], cfg.donor_length, (_S_DONOR, 1, trial)
    )
    est = estimate_grid(donor, cfg.ibo)
    run = run_bo(
        initial,
        BoParams(est.lambda_hat, cfg.ei_tolerance, cfg.n_starts),
        rosenbrock,
        max_iter=cfg.transfer_iterations,
        seed=(cfg.seed, _S_RUN, 3, trial),
    )
    pad = cfg.transfer_iterations + 1 - len(run.best_curve)
    out["ibo_transfer"] = np.concatenate(
        [run.best_curve, np.full(pad, run.best_curve[-1])]
    )
    out["lambda_transfer"] = float(est.lambda_hat[0])
    return out


@dataclass
class TransferReport:
    cfg: StudyConfig
    curves: dict[str, np.ndarray]  # arm -> (trials, iterations+1)
    bands: dict[str, np.ndarray]  # arm -> (iterations+1, 3) mean/lo/hi
    selected: np.ndarray  # (trials, iterations) self-adaptive picks
    transfer_lambdas: np.ndarray
    failures: int
    out_dir: Path

    def selection_fraction(self, value: float) -> np.ndarray:
        """Per-iteration fraction of trials whose self-adaptive pick equals
        ``value``."""
        return (self.selected == value).mean(axis=0)


def transfer_study(cfg: StudyConfig, out_dir) -> TransferReport:
    """Run the four arms and emit convergence curves with bootstrap bands
    plus the per-iteration distribution of self-adaptive weight picks."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(cfg, t) for t in range(cfg.trials)]
    results, failed = _run_pool(_transfer_trial, payloads, cfg.pool_size())
    if not results:
        raise RuntimeError("every transfer trial failed")
    curves = {arm: np.stack([r[arm] for r in results]) for arm in ARMS}
    bands = {}
    for arm in ARMS:
        rows = []
        for it in range(cfg.transfer_iterations + 1):
            rows.append(
                bootstrap_ci(
                    curves[arm][:, it], cfg.n_bootstrap,
                    seeded_rng(cfg.seed, _S_BOOT, ARMS.index(arm), it),
                )
            )
        bands[arm] = np.asarray(rows)
    selected = np.asarray([r["selected"] for r in results])
    transfer_lambdas = np.asarray([r["lambda_transfer"] for r in results])
    report = TransferReport(
        cfg, curves, bands, selected, transfer_lambdas, failed, out
    )
    _write_transfer_files(report)
    return report


def _write_transfer_files(report: TransferReport) -> None:
    cfg = report.cfg
    with open(report.out_dir / "convergence.csv", "w") as fh:
        fh.write("arm,iter,mean_best,lo,hi\n")
        for arm in ARMS:
            for it in range(cfg.transfer_iterations + 1):
                mean, lo, hi = (float(v) for v in report.bands[arm][it])
                fh.write(f"{arm},{it},{mean!r},{lo!r},{hi!r}\n")
    with open(report.out_dir / "lambda_gp.csv", "w") as fh:
        fh.write("iter,lambda,fraction\n")
        for it in range(cfg.transfer_iterations):
            for val in cfg.lambda_cases:
                frac = float((report.selected[:, it] == val).mean())
                fh.write(f"{it + 1},{val:g},{frac!r}\n")
    _write_meta(report.out_dir, cfg, {"failures": report.failures,
                                      "transfer_lambdas": report.transfer_lambdas.tolist()})


# ---------------------------------------------------------------------------
# shared plumbing


def _run_pool(fn, payloads, workers: int):
    """Map trials over a process pool (in-process when workers == 1),
    recording failures instead of aborting the study."""
    results = []
    failed = 0
    if workers <= 1 or len(payloads) <= 1:
        outcomes = []
        for pl in payloads:
            try:
                outcomes.append(fn(pl))
            except Exception as exc:  # noqa: BLE001 - trial isolation
                outcomes.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
            futures = [pool.submit(fn, pl) for pl in payloads]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    outcomes.append(exc)
    for o in outcomes:
        if isinstance(o, Exception):
            failed += 1
        else:
            results.append(o)
    return results, failed


def _config_doc(cfg: StudyConfig) -> dict:
    doc = dataclasses.asdict(cfg)

    def scrub(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, dict):
            return {k: scrub(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [scrub(x) for x in v]
        return v

    return scrub(doc)


def _write_meta(out_dir: Path, cfg: StudyConfig, extra: dict) -> None:
    import scipy

    meta = {
        "config": _config_doc(cfg),
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": _kernels.BACKEND,
        },
    }
    meta.update(extra)
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1)
