from __future__ import annotations

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from strategist import objectives
from strategist.service import create_app

FAST_OVERRIDES = {"n_uniform": 400, "n_normal": 400, "n_ini": 400}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as c:
        yield c


def _submit_square(client, sid, pts):
    out = []
    for x in pts:
        r = client.post(f"/sessions/{sid}/evaluate", json={"x": list(map(float, x))})
        assert r.status_code == 200, r.text
        out.append(r.json())
    return out


def _wait_done(client, run_id, timeout=60.0):
    t0 = time.time()
    while time.time() - t0 < timeout:
        snap = client.get(f"/runs/{run_id}").json()
        if snap["state"] in ("done", "failed"):
            return snap
        time.sleep(0.05)
    raise TimeoutError("run did not finish")


def test_create_session_returns_bounds(client):
    r = client.post("/sessions", json={"objective": "branin", "seed": 1})
    assert r.status_code == 200
    body = r.json()
    assert body["space"] == {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]}
    assert body["id"]


def test_unknown_objective_lists_names(client):
    r = client.post("/sessions", json={"objective": "nope", "seed": 0})
    assert r.status_code == 400
    body = r.json()
    assert body["code"] == "unknown_objective"
    assert set(body["detail"]["available"]) >= {"rosenbrock2d", "rastrigin2d", "branin"}


def test_evaluate_at_optimum_image(client):
    sid = client.post("/sessions", json={"objective": "rosenbrock2d", "seed": 0}).json()["id"]
    r = client.post(f"/sessions/{sid}/evaluate", json={"x": [0.5, 0.5]})
    assert r.json()["f"] == 0.0
    assert r.json()["trial_index"] == 1


def test_evaluate_out_of_bounds_names_axis(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 0}).json()["id"]
    r = client.post(f"/sessions/{sid}/evaluate", json={"x": [0.0, 1.5]})
    assert r.status_code == 400
    body = r.json()
    assert body["code"] == "out_of_bounds"
    assert body["detail"]["axis"] == 1
    assert "x[1]" in body["message"]


def test_evaluate_duplicate_advises_perturbation(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 0}).json()["id"]
    _submit_square(client, sid, [[0.1, 0.2]])
    r = client.post(f"/sessions/{sid}/evaluate", json={"x": [0.1, 0.2]})
    assert r.status_code == 400
    assert r.json()["code"] == "duplicate_x"
    assert "perturbation" in r.json()["message"]


def test_trial_indices_sequential(client):
    sid = client.post("/sessions", json={"objective": "rastrigin2d", "seed": 0}).json()["id"]
    rng = np.random.default_rng(0)
    responses = _submit_square(client, sid, rng.uniform(-1, 1, (10, 2)))
    assert [r["trial_index"] for r in responses] == list(range(1, 11))


def test_fresh_session_snapshot_empty(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 0}).json()["id"]
    snap = client.get(f"/sessions/{sid}").json()
    assert snap["trajectory"] == []
    assert snap["runs"] == []
    assert snap["estimates"] == []


def test_unknown_ids_are_404(client):
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.get("/runs/deadbeef").status_code == 404
    r = client.post("/sessions/deadbeef/evaluate", json={"x": [0.0, 0.0]})
    assert r.status_code == 404


def test_same_seed_same_objective_behavior(client):
    a = client.post("/sessions", json={"objective": "branin", "seed": 5}).json()["id"]
    b = client.post("/sessions", json={"objective": "branin", "seed": 5}).json()["id"]
    assert a != b
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1, 1, (5, 2)):
        fa = client.post(f"/sessions/{a}/evaluate", json={"x": list(x)}).json()["f"]
        fb = client.post(f"/sessions/{b}/evaluate", json={"x": list(x)}).json()["f"]
        assert fa == fb


def test_ibo_requires_three_trials(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 0}).json()["id"]
    _submit_square(client, sid, [[0.0, 0.0], [0.5, 0.5]])
    r = client.post(f"/sessions/{sid}/ibo", json={"mode": "grid"})
    assert r.status_code == 400
    assert r.json()["code"] == "insufficient_trajectory"


def test_ibo_grid_cost_table_cell_counts(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 2}).json()["id"]
    rng = np.random.default_rng(2)
    _submit_square(client, sid, rng.uniform(-1, 1, (15, 2)))
    r = client.post(
        f"/sessions/{sid}/ibo", json={"mode": "grid", "overrides": FAST_OVERRIDES}
    )
    assert r.status_code == 200, r.text
    est = r.json()
    assert est["estimate_id"]
    # 4 weights x 4 bo x 2 ini cells at each prefix 3..15
    table = est["cost_table"]
    prefixes = {row["prefix_len"] for row in table}
    assert prefixes == set(range(3, 16))
    for prefix in prefixes:
        assert sum(row["prefix_len"] == prefix for row in table) == 4 * 4 * 2
    snap = client.get(f"/sessions/{sid}").json()
    assert len(snap["estimates"]) == 1


def test_ibo_continuous_within_bounds(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 3}).json()["id"]
    rng = np.random.default_rng(3)
    _submit_square(client, sid, rng.uniform(-1, 1, (6, 2)))
    overrides = dict(FAST_OVERRIDES, n_restarts=2, alpha_bo_grid=[1.0])
    r = client.post(
        f"/sessions/{sid}/ibo", json={"mode": "continuous", "overrides": overrides}
    )
    assert r.status_code == 200, r.text
    lam = r.json()["lambda_hat"]
    assert all(0.01 <= v <= 10.0 for v in lam)


def test_ibo_rejects_unknown_override(client):
    sid = client.post("/sessions", json={"objective": "branin", "seed": 0}).json()["id"]
    rng = np.random.default_rng(4)
    _submit_square(client, sid, rng.uniform(-1, 1, (3, 2)))
    r = client.post(
        f"/sessions/{sid}/ibo", json={"mode": "grid", "overrides": {"banana": 1}}
    )
    assert r.status_code == 400
    assert r.json()["code"] == "bad_override"


def test_validation_errors_are_400(client):
    r = client.post("/sessions", json={"seed": 0})
    assert r.status_code == 400
    assert r.json()["code"] == "validation"


def _session_with_estimate(client, seed=6, n=8):
    sid = client.post("/sessions", json={"objective": "branin", "seed": seed}).json()["id"]
    rng = np.random.default_rng(seed)
    _submit_square(client, sid, rng.uniform(-1, 1, (n, 2)))
    est = client.post(
        f"/sessions/{sid}/ibo", json={"mode": "grid", "overrides": FAST_OVERRIDES}
    ).json()
    return sid, est["estimate_id"]


def test_continue_single_iteration(client):
    sid, eid = _session_with_estimate(client)
    r = client.post(
        f"/sessions/{sid}/continue", json={"estimate_id": eid, "iterations": 1}
    )
    assert r.status_code == 200, r.text
    snap = _wait_done(client, r.json()["run_id"])
    assert snap["state"] == "done"
    assert len(snap["iterates"]) == 1
    assert len(snap["best_curve"]) == 2


def test_continue_unknown_estimate_404(client):
    sid, _ = _session_with_estimate(client, seed=7)
    r = client.post(
        f"/sessions/{sid}/continue", json={"estimate_id": "missing", "iterations": 1}
    )
    assert r.status_code == 404


def test_concurrent_continuation_conflicts(client, monkeypatch):
    import threading

    import strategist.service as service_mod

    gate = threading.Event()
    real_run_bo = service_mod.run_bo

    def gated(*args, **kwargs):
        gate.wait(timeout=30)
        return real_run_bo(*args, **kwargs)

    monkeypatch.setattr(service_mod, "run_bo", gated)
    sid, eid = _session_with_estimate(client, seed=8)
    r1 = client.post(
        f"/sessions/{sid}/continue", json={"estimate_id": eid, "iterations": 1}
    )
    assert r1.status_code == 200
    r2 = client.post(
        f"/sessions/{sid}/continue", json={"estimate_id": eid, "iterations": 1}
    )
    assert r2.status_code == 409
    assert r2.json()["code"] == "run_active"
    gate.set()
    _wait_done(client, r1.json()["run_id"])


def test_continuation_progress_and_final_record(client):
    sid, eid = _session_with_estimate(client, seed=9)
    run_id = client.post(
        f"/sessions/{sid}/continue", json={"estimate_id": eid, "iterations": 12}
    ).json()["run_id"]
    seen = 0
    while True:
        snap = client.get(f"/runs/{run_id}").json()
        assert len(snap["iterates"]) >= seen  # append-only progress
        seen = len(snap["iterates"])
        if snap["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert snap["state"] == "done"
    curve = snap["best_curve"]
    assert len(curve) == 13
    assert all(b <= a + 1e-15 for a, b in zip(curve, curve[1:]))
    # human trajectory untouched by the continuation
    traj = client.get(f"/sessions/{sid}").json()["trajectory"]
    assert len(traj) == 8


def test_restart_reproduces_snapshots(tmp_path):
    data = tmp_path / "data"
    with TestClient(create_app(data)) as client:
        sid, eid = _session_with_estimate(client, seed=10, n=6)
        run_id = client.post(
            f"/sessions/{sid}/continue", json={"estimate_id": eid, "iterations": 2}
        ).json()["run_id"]
        _wait_done(client, run_id)
        before_session = client.get(f"/sessions/{sid}").json()
        before_run = client.get(f"/runs/{run_id}").json()
    with TestClient(create_app(data)) as client2:
        assert client2.get(f"/sessions/{sid}").json() == before_session
        assert client2.get(f"/runs/{run_id}").json() == before_run


def test_hidden_optimum_never_serialized(client, monkeypatch):
    """Canary objective with an improbable optimum: its coordinates must not
    appear in any response the client ever sees."""
    cx, cy = 0.7361294716, -0.4140830137

    def canary_fn(z):
        z = np.asarray(z, dtype=float)
        return float((z[0] - cx) ** 2 + (z[1] - cy) ** 2)

    monkeypatch.setitem(
        objectives.OBJECTIVES, "canary", objectives.BenchmarkObjective("canary", canary_fn)
    )
    sid = client.post("/sessions", json={"objective": "canary", "seed": 0}).json()["id"]
    rng = np.random.default_rng(11)
    _submit_square(client, sid, rng.uniform(-1, 1, (6, 2)))
    est = client.post(
        f"/sessions/{sid}/ibo", json={"mode": "grid", "overrides": FAST_OVERRIDES}
    ).json()
    run_id = client.post(
        f"/sessions/{sid}/continue",
        json={"estimate_id": est["estimate_id"], "iterations": 2},
    ).json()["run_id"]
    _wait_done(client, run_id)
    blobs = [
        json.dumps(client.get(f"/sessions/{sid}").json()),
        json.dumps(client.get(f"/runs/{run_id}").json()),
        json.dumps(est),
    ]
    for needle in ("0.7361294716", "-0.4140830137", "0.73612947", "0.41408301"):
        for blob in blobs:
            assert needle not in blob
