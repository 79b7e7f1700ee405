from __future__ import annotations

import json

import numpy as np
import pytest

from strategist.core import (
    SearchSpace,
    Trajectory,
    TrajectoryFormatError,
    load_trajectory,
    normalize_trajectory,
    save_trajectory,
)


def _traj(lower, upper, X, f):
    return Trajectory(SearchSpace(np.asarray(lower, float), np.asarray(upper, float)),
                      np.asarray(X, float), np.asarray(f, float))


def test_space_rejects_degenerate_axis():
    with pytest.raises(ValueError, match="axis 1"):
        SearchSpace(np.array([0.0, 1.0]), np.array([1.0, 1.0]))


def test_space_log_volume_high_dim():
    sp = SearchSpace(np.full(30, -2.0), np.full(30, 2.0))
    assert np.isfinite(sp.log_volume)
    assert sp.log_volume == pytest.approx(30 * np.log(4.0))


def test_normalize_midpoint_maps_to_zero():
    t = _traj([0.0], [2.0], [[1.0], [0.5]], [3.0, 4.0])
    tn, _ = normalize_trajectory(t)
    assert tn.X[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_normalize_boundary_maps_to_boundary():
    p = 30
    sp = SearchSpace(np.full(p, -2.0), np.full(p, 2.0))
    t = Trajectory(sp, np.vstack([sp.lower, np.zeros(p)]), np.array([1.0, 2.0]))
    tn, _ = normalize_trajectory(t)
    np.testing.assert_allclose(tn.X[0], -1.0)


def test_normalize_affine_map_value():
    # 2*(x - l)/(u - l) - 1 at x = 7.5 on [0, 10]
    t = _traj([0.0], [10.0], [[7.5], [2.0]], [0.0, 1.0])
    tn, _ = normalize_trajectory(t)
    assert tn.X[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_normalize_roundtrip_componentwise():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = rng.integers(1, 6)
        lower = rng.uniform(-5, 0, p)
        upper = lower + rng.uniform(0.5, 10, p)
        X = rng.uniform(lower, upper, size=(4, p))
        t = Trajectory(SearchSpace(lower, upper), X, rng.standard_normal(4))
        tn, tr = normalize_trajectory(t)
        assert tn.space.contains(tn.X[0])
        np.testing.assert_allclose(tr.inverse(tn.X), X, atol=1e-12)
        # objective values unchanged
        np.testing.assert_array_equal(tn.f, t.f)


def test_trajectory_rejects_out_of_bounds_sample():
    with pytest.raises(TrajectoryFormatError, match="sample 1"):
        _traj([0.0], [1.0], [[0.5], [1.5]], [0.0, 1.0])


def test_trajectory_accepts_inclusive_bounds():
    t = _traj([0.0], [1.0], [[0.0], [1.0]], [0.0, 1.0])
    assert len(t) == 2


def test_trajectory_rejects_duplicate_x():
    with pytest.raises(TrajectoryFormatError, match="duplicates sample 0"):
        _traj([0.0], [1.0], [[0.5], [0.5]], [0.0, 1.0])


def test_trajectory_arrays_immutable():
    t = _traj([0.0], [1.0], [[0.2], [0.8]], [0.0, 1.0])
    with pytest.raises(ValueError):
        t.X[0, 0] = 0.3


def test_save_load_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    t = _traj([0.0], [1.0], rng.uniform(0, 1, (2, 1)), rng.standard_normal(2))
    path = tmp_path / "t.json"
    save_trajectory(t, path)
    t2 = load_trajectory(path)
    np.testing.assert_array_equal(t2.X, t.X)
    np.testing.assert_array_equal(t2.f, t.f)
    np.testing.assert_array_equal(t2.space.lower, t.space.lower)
    np.testing.assert_array_equal(t2.space.upper, t.space.upper)


def test_load_reports_offending_record(tmp_path):
    doc = {
        "space": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "samples": [
            {"x": [0.1, 0.2], "f": 1.0},
            {"x": [0.3], "f": 2.0},
        ],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(TrajectoryFormatError, match="sample 1") as err:
        load_trajectory(path)
    assert err.value.record == 1


def test_load_rejects_malformed_document(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    with pytest.raises(TrajectoryFormatError):
        load_trajectory(path)


def test_prefix_and_extended():
    t = _traj([0.0], [1.0], [[0.1], [0.2], [0.3]], [3.0, 2.0, 1.0])
    assert len(t.prefix(2)) == 2
    t2 = t.extended([0.4], 0.5)
    assert len(t2) == 4
    assert t2.f[-1] == 0.5
