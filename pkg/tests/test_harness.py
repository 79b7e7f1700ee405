from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from strategist.core import load_trajectory
from strategist.harness import (
    ARMS,
    StudyConfig,
    bootstrap_ci,
    recovery_study,
    transfer_study,
)
from strategist.objectives import rosenbrock


def test_rosenbrock_known_values():
    for p in (2, 5, 30):
        assert rosenbrock(np.ones(p)) == 0.0
        assert rosenbrock(np.zeros(p)) == float(p - 1)


def test_rosenbrock_batch_matches_loop():
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, (10, 4))
    batch = rosenbrock(X)
    for i, x in enumerate(X):
        direct = sum(
            100.0 * (x[j + 1] - x[j] ** 2) ** 2 + (1.0 - x[j]) ** 2
            for j in range(3)
        )
        assert batch[i] == pytest.approx(direct, rel=1e-12)


def test_bootstrap_ci_constant_samples():
    assert bootstrap_ci([3.5, 3.5, 3.5], 100, seed=0) == (3.5, 3.5, 3.5)


def test_bootstrap_ci_single_resample_degenerates():
    mean, lo, hi = bootstrap_ci([1.0, 2.0, 3.0], 1, seed=0)
    assert mean == pytest.approx(2.0)
    assert lo <= mean <= hi


def test_bootstrap_ci_matches_standard_error():
    """Bernoulli samples: the bootstrap spread of the mean should track
    0.5/sqrt(n)."""
    n = 400
    rng = np.random.default_rng(2)
    samples = (rng.random(n) < 0.5).astype(float)
    mean, lo, hi = bootstrap_ci(samples, 4000, seed=3)
    half_width = (hi - lo) / 2
    assert half_width == pytest.approx(0.5 / np.sqrt(n), rel=0.15)


@pytest.fixture(scope="module")
def smoke_recovery(tmp_path_factory):
    cfg = StudyConfig.smoke(seed=7)
    out = tmp_path_factory.mktemp("recovery")
    return cfg, recovery_study(cfg, out)


def test_smoke_recovery_files_parse(smoke_recovery):
    cfg, report = smoke_recovery
    with open(report.out_dir / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    n_expected = (
        len(cfg.lambda_cases)
        * len(cfg.prefix_lengths)
        * len(cfg.ibo.lambda_candidates(cfg.dim))
        * len(cfg.ibo.alpha_ini_values)
    )
    assert len(rows) == n_expected
    for row in rows:
        float(row["mean_L"])
        float(row["sd_L"])
    with open(report.out_dir / "recovery.csv") as fh:
        rec_rows = list(csv.DictReader(fh))
    assert len(rec_rows) == len(cfg.lambda_cases) * len(cfg.prefix_lengths)
    meta = json.loads((report.out_dir / "meta.json").read_text())
    assert meta["config"]["dim"] == cfg.dim
    assert "kernel_backend" in meta["versions"]


def test_smoke_recovery_trajectories_on_disk(smoke_recovery):
    cfg, report = smoke_recovery
    files = sorted((report.out_dir / "trajectories").glob("*.json"))
    assert len(files) == len(cfg.lambda_cases) * cfg.trials
    t = load_trajectory(files[0])
    # zero search iterations in smoke mode: only the initial design
    assert len(t) == cfg.bo_init + max(0, cfg.max_prefix - cfg.bo_init)


def test_smoke_recovery_report_consistency(smoke_recovery):
    cfg, report = smoke_recovery
    case = cfg.lambda_cases[0]
    arr = report.costs[case]
    assert arr.shape == (
        cfg.trials,
        len(cfg.prefix_lengths),
        len(report.candidate_labels),
        len(cfg.ibo.alpha_ini_values),
    )
    assert np.isfinite(arr).all()
    rates = report.selection_rates(case, cfg.max_prefix)
    assert rates.sum() == pytest.approx(1.0)
    # curve rows must match the raw per-trial records
    with open(report.out_dir / "curves.csv") as fh:
        row = next(csv.DictReader(fh))
    li = report.candidate_labels.index(float(row["lambda_hat"]))
    ai = cfg.ibo.alpha_ini_values.index(float(row["alpha_ini"]))
    pi = cfg.prefix_lengths.index(int(row["prefix_len"]))
    case0 = float(row["case"])
    assert float(row["mean_L"]) == pytest.approx(
        report.costs[case0][:, pi, li, ai].mean()
    )


def test_smoke_recovery_reproducible(tmp_path):
    cfg = StudyConfig.smoke(seed=11)
    r1 = recovery_study(cfg, tmp_path / "a")
    r2 = recovery_study(cfg, tmp_path / "b")
    for case in cfg.lambda_cases:
        np.testing.assert_array_equal(r1.costs[case], r2.costs[case])


@pytest.fixture(scope="module")
def smoke_transfer(tmp_path_factory):
    cfg = StudyConfig.smoke(seed=19)
    out = tmp_path_factory.mktemp("transfer")
    return cfg, transfer_study(cfg, out)


def test_smoke_transfer_curves_and_files(smoke_transfer):
    cfg, report = smoke_transfer
    for arm in ARMS:
        curves = report.curves[arm]
        assert curves.shape == (cfg.trials, cfg.transfer_iterations + 1)
        assert (np.diff(curves, axis=1) <= 0).all()
        band = report.bands[arm]
        assert (band[:, 1] <= band[:, 0] + 1e-12).all()
        assert (band[:, 0] <= band[:, 2] + 1e-12).all()
    with open(report.out_dir / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(ARMS) * (cfg.transfer_iterations + 1)
    with open(report.out_dir / "lambda_gp.csv") as fh:
        lam_rows = list(csv.DictReader(fh))
    assert len(lam_rows) == cfg.transfer_iterations * len(cfg.lambda_cases)
    # per-iteration fractions over the weight grid sum to one
    by_iter: dict[str, float] = {}
    for row in lam_rows:
        by_iter[row["iter"]] = by_iter.get(row["iter"], 0.0) + float(row["fraction"])
    assert all(v == pytest.approx(1.0) for v in by_iter.values())


def test_smoke_transfer_selected_weights_valid(smoke_transfer):
    cfg, report = smoke_transfer
    assert report.selected.shape == (cfg.trials, cfg.transfer_iterations)
    assert set(np.unique(report.selected)) <= set(cfg.lambda_cases)
    assert report.transfer_lambdas.shape == (cfg.trials,)


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(trials=0)
    with pytest.raises(ValueError):
        StudyConfig(bo_init=1)
