"""Demonstration-capture HTTP service.

A session serves one hidden 2-D benchmark on the normalized box: humans
submit trial points and get scores back, the captured trajectory can be
inverse-fitted, and a tuned continuation then runs off the request path
while clients poll its progress. Sessions persist as the trajectory
document plus a sidecar metadata file; a restarted server reloads both.

The objective itself never leaves the process: responses carry scores and
the objective's name, nothing about its optimum.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import objectives
from .acquisition import BoRunRecord, run_bo
from .core import BoParams, Trajectory, trajectory_from_document, trajectory_to_document
from .ibo import (
    IboConfig,
    InsufficientTrajectoryError,
    estimate_continuous,
    estimate_grid,
)
from .sampling import ProposalConfig

__all__ = ["create_app", "SessionStore", "ServiceError", "CONTINUATION_EI_TOLERANCE"]

DATA_DIR_ENV = "STRATEGIST_DATA_DIR"
# continuations run to their iteration budget; the tolerance only guards
# against a perfectly flat merit surface
CONTINUATION_EI_TOLERANCE = 1e-12
CONTINUATION_N_STARTS = 40


class ServiceError(Exception):
    """Structured API error: HTTP status plus {code, message, detail}."""

    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail

    def payload(self) -> dict:
        return {"code": self.code, "message": self.message, "detail": self.detail}


@dataclass
class RunState:
    run_id: str
    session_id: str
    estimate_id: str
    iterations: int
    state: str = "pending"  # pending -> running -> done | failed
    iterates: list[dict] = field(default_factory=list)
    best_curve: list[float] = field(default_factory=list)
    error: str | None = None

    def snapshot(self) -> dict:
        return {
            "run_id": self.run_id,
            "session_id": self.session_id,
            "estimate_id": self.estimate_id,
            "iterations": self.iterations,
            "state": self.state,
            "iterates": [dict(it) for it in self.iterates],
            "best_curve": list(self.best_curve),
            "error": self.error,
        }


@dataclass
class Session:
    id: str
    objective_name: str
    seed: int
    created_at: float
    X: list[list[float]] = field(default_factory=list)
    f: list[float] = field(default_factory=list)
    estimates: dict[str, dict] = field(default_factory=dict)
    runs: dict[str, RunState] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def objective(self) -> objectives.BenchmarkObjective:
        return objectives.OBJECTIVES[self.objective_name]

    def trajectory(self) -> Trajectory:
        return Trajectory(self.objective.space, np.asarray(self.X), np.asarray(self.f))


def _estimate_payload(estimate_id: str, mode: str, est) -> dict:
    return {
        "estimate_id": estimate_id,
        "mode": mode,
        "lambda_hat": np.asarray(est.lambda_hat).tolist(),
        "alpha_bo_hat": float(est.alpha_bo_hat),
        "alpha_ini_hat": float(est.alpha_ini_hat),
        "k0_hat": int(est.k0_hat),
        "cost": float(est.cost),
        "ini_terms": {str(i): float(v) for i, v in est.ini_terms.items()},
        "bo_terms": {str(j): float(v) for j, v in est.bo_terms.items()},
        "improved": bool(est.improved),
        "cost_table": [
            {
                "lambda": c.lambda_label,
                "alpha_bo": c.alpha_bo,
                "alpha_ini": c.alpha_ini,
                "prefix_len": c.prefix_len,
                "k0": c.k0,
                "cost": c.cost,
            }
            for c in est.table
        ],
    }


class SessionStore:
    """Owns sessions, runs, and their on-disk form. Per-session locks
    serialize writers; snapshots are built under the same lock so readers
    never see torn state."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._runs: dict[str, RunState] = {}
        self._load()

    # -- persistence ------------------------------------------------------

    def _traj_path(self, sid: str) -> Path:
        return self.root / "sessions" / f"{sid}.trajectory.json"

    def _meta_path(self, sid: str) -> Path:
        return self.root / "sessions" / f"{sid}.meta.json"

    def _load(self) -> None:
        for meta_path in sorted((self.root / "sessions").glob("*.meta.json")):
            with open(meta_path) as fh:
                meta = json.load(fh)
            sid = meta["id"]
            sess = Session(
                id=sid,
                objective_name=meta["objective"],
                seed=int(meta["seed"]),
                created_at=float(meta["created_at"]),
                estimates=meta.get("estimates", {}),
            )
            traj_path = self._traj_path(sid)
            if traj_path.exists():
                with open(traj_path) as fh:
                    doc = json.load(fh)
                if doc["samples"]:
                    t = trajectory_from_document(doc)
                    sess.X = [list(map(float, row)) for row in t.X]
                    sess.f = [float(v) for v in t.f]
            for rdoc in meta.get("runs", []):
                run = RunState(
                    run_id=rdoc["run_id"],
                    session_id=sid,
                    estimate_id=rdoc["estimate_id"],
                    iterations=rdoc["iterations"],
                    state=rdoc["state"],
                    iterates=rdoc.get("iterates", []),
                    best_curve=rdoc.get("best_curve", []),
                    error=rdoc.get("error"),
                )
                if run.state in ("pending", "running"):
                    run.state = "failed"
                    run.error = "interrupted by server restart"
                sess.runs[run.run_id] = run
                self._runs[run.run_id] = run
            self._sessions[sid] = sess

    def _persist(self, sess: Session) -> None:
        # caller holds the session lock
        doc = {
            "space": {
                "lower": sess.objective.space.lower.tolist(),
                "upper": sess.objective.space.upper.tolist(),
            },
            "samples": [
                {"x": x, "f": f} for x, f in zip(sess.X, sess.f)
            ],
        }
        meta = {
            "id": sess.id,
            "objective": sess.objective_name,
            "seed": sess.seed,
            "created_at": sess.created_at,
            "estimates": sess.estimates,
            "runs": [r.snapshot() for r in sess.runs.values()],
        }
        for path, payload in ((self._traj_path(sess.id), doc), (self._meta_path(sess.id), meta)):
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w") as fh:
                json.dump(payload, fh)
            os.replace(tmp, path)

    # -- operations -------------------------------------------------------

    def create_session(self, objective_name: str, seed: int) -> Session:
        if objective_name not in objectives.OBJECTIVES:
            raise ServiceError(
                400,
                "unknown_objective",
                f"unknown objective {objective_name!r}",
                {"available": sorted(objectives.OBJECTIVES)},
            )
        sess = Session(
            id=uuid.uuid4().hex,
            objective_name=objective_name,
            seed=int(seed),
            created_at=time.time(),
        )
        with self._lock:
            self._sessions[sess.id] = sess
        with sess.lock:
            self._persist(sess)
        return sess

    def get(self, sid: str) -> Session:
        with self._lock:
            sess = self._sessions.get(sid)
        if sess is None:
            raise ServiceError(404, "unknown_session", f"no session {sid!r}")
        return sess

    def get_run(self, run_id: str) -> RunState:
        with self._lock:
            run = self._runs.get(run_id)
        if run is None:
            raise ServiceError(404, "unknown_run", f"no run {run_id!r}")
        return run

    def evaluate(self, sid: str, x: list[float]) -> tuple[float, int]:
        sess = self.get(sid)
        space = sess.objective.space
        xv = np.asarray(x, dtype=float)
        if xv.shape != (space.p,):
            raise ServiceError(
                400, "bad_dimension", f"x must have length {space.p}, got {xv.size}"
            )
        if not np.isfinite(xv).all():
            raise ServiceError(400, "bad_value", "x must be finite")
        for axis in range(space.p):
            if not (space.lower[axis] <= xv[axis] <= space.upper[axis]):
                raise ServiceError(
                    400,
                    "out_of_bounds",
                    f"x[{axis}] = {xv[axis]} outside "
                    f"[{space.lower[axis]}, {space.upper[axis]}]",
                    {"axis": axis},
                )
        with sess.lock:
            for i, prev in enumerate(sess.X):
                if prev == list(map(float, xv)):
                    raise ServiceError(
                        400,
                        "duplicate_x",
                        f"x duplicates trial {i + 1} exactly; "
                        "resubmit with a small perturbation",
                        {"duplicate_of": i + 1},
                    )
            fval = float(sess.objective(xv))
            sess.X.append([float(v) for v in xv])
            sess.f.append(fval)
            index = len(sess.f)
            self._persist(sess)
        return fval, index

    def run_ibo(self, sid: str, mode: str, overrides: dict | None) -> dict:
        sess = self.get(sid)
        with sess.lock:
            if len(sess.f) < 3:
                raise ServiceError(
                    400,
                    "insufficient_trajectory",
                    f"need at least 3 trials before fitting (have {len(sess.f)})",
                )
            t = sess.trajectory()
        cfg = _ibo_config_from_overrides(overrides or {}, default_seed=sess.seed)
        try:
            if mode == "grid":
                est = estimate_grid(t, cfg)
            elif mode == "continuous":
                est = estimate_continuous(t, cfg)
            else:
                raise ServiceError(
                    400, "bad_mode", f"mode must be 'grid' or 'continuous', got {mode!r}"
                )
        except InsufficientTrajectoryError as exc:
            raise ServiceError(400, "insufficient_trajectory", str(exc)) from exc
        estimate_id = uuid.uuid4().hex
        payload = _estimate_payload(estimate_id, mode, est)
        with sess.lock:
            sess.estimates[estimate_id] = payload
            self._persist(sess)
        return payload

    def continue_bo(self, sid: str, estimate_id: str, iterations: int,
                    prefix: int | None = None) -> RunState:
        sess = self.get(sid)
        if iterations < 1:
            raise ServiceError(400, "bad_iterations", "iterations must be >= 1")
        with sess.lock:
            est = sess.estimates.get(estimate_id)
            if est is None:
                raise ServiceError(404, "unknown_estimate", f"no estimate {estimate_id!r}")
            for run in sess.runs.values():
                if run.state in ("pending", "running"):
                    raise ServiceError(
                        409,
                        "run_active",
                        f"run {run.run_id} is still {run.state}; "
                        "one continuation per session",
                    )
            t = sess.trajectory()
            if prefix is not None:
                if not 2 <= prefix <= len(t):
                    raise ServiceError(
                        400, "bad_prefix", f"prefix must be in 2..{len(t)}"
                    )
                t = t.prefix(prefix)
            run = RunState(
                run_id=uuid.uuid4().hex,
                session_id=sid,
                estimate_id=estimate_id,
                iterations=iterations,
            )
            sess.runs[run.run_id] = run
            self._runs[run.run_id] = run
            self._persist(sess)
        params = BoParams(
            lam=np.asarray(est["lambda_hat"], dtype=float),
            ei_tolerance=CONTINUATION_EI_TOLERANCE,
            n_starts=CONTINUATION_N_STARTS,
        )
        thread = threading.Thread(
            target=self._continuation_worker,
            args=(sess, run, t, params),
            daemon=True,
        )
        thread.start()
        return run

    def _continuation_worker(self, sess: Session, run: RunState,
                             initial: Trajectory, params: BoParams) -> None:
        objective = sess.objective
        with sess.lock:
            run.state = "running"
            run.best_curve = [float(np.min(initial.f))]

        def on_iterate(x: np.ndarray, fval: float) -> None:
            with sess.lock:
                run.iterates.append({"x": [float(v) for v in x], "f": float(fval)})
                run.best_curve.append(min(run.best_curve[-1], float(fval)))

        try:
            record: BoRunRecord = run_bo(
                initial,
                params,
                lambda x: objective(x),
                max_iter=run.iterations,
                seed=(sess.seed, 0xC0, len(sess.runs)),
                on_iterate=on_iterate,
            )
            with sess.lock:
                run.state = "done"
                run.best_curve = [float(v) for v in record.best_curve]
                self._persist(sess)
        except Exception as exc:  # noqa: BLE001 - surfaced in the run state
            with sess.lock:
                run.state = "failed"
                run.error = str(exc)
                self._persist(sess)

    def snapshot(self, sid: str) -> dict:
        sess = self.get(sid)
        with sess.lock:
            return {
                "id": sess.id,
                "objective": sess.objective_name,
                "created_at": sess.created_at,
                "space": {
                    "lower": sess.objective.space.lower.tolist(),
                    "upper": sess.objective.space.upper.tolist(),
                },
                "trajectory": [
                    {"x": list(x), "f": f, "trial_index": i + 1}
                    for i, (x, f) in enumerate(zip(sess.X, sess.f))
                ],
                "estimates": [dict(e) for e in sess.estimates.values()],
                "runs": [r.snapshot() for r in sess.runs.values()],
            }

    def run_snapshot(self, run_id: str) -> dict:
        run = self.get_run(run_id)
        sess = self.get(run.session_id)
        with sess.lock:
            return run.snapshot()


_PROPOSAL_KEYS = {"sigma_i", "n_uniform", "n_normal"}
_CONFIG_KEYS = {
    "alpha_bo_grid",
    "alpha_ini_values",
    "lambda_grid",
    "lambda_bounds",
    "n_restarts",
    "fd_step",
    "k0_fixed",
    "n_ini",
    "seed",
}


def _ibo_config_from_overrides(overrides: dict, default_seed: int) -> IboConfig:
    unknown = set(overrides) - _CONFIG_KEYS - _PROPOSAL_KEYS
    if unknown:
        raise ServiceError(
            400,
            "bad_override",
            f"unknown override(s): {sorted(unknown)}",
            {"allowed": sorted(_CONFIG_KEYS | _PROPOSAL_KEYS)},
        )
    prop_kwargs = {k: overrides[k] for k in _PROPOSAL_KEYS if k in overrides}
    cfg_kwargs: dict[str, Any] = {k: overrides[k] for k in _CONFIG_KEYS if k in overrides}
    if "alpha_bo_grid" in cfg_kwargs:
        cfg_kwargs["alpha_bo_grid"] = tuple(cfg_kwargs["alpha_bo_grid"])
    if "alpha_ini_values" in cfg_kwargs:
        cfg_kwargs["alpha_ini_values"] = tuple(cfg_kwargs["alpha_ini_values"])
    if "lambda_bounds" in cfg_kwargs:
        cfg_kwargs["lambda_bounds"] = tuple(cfg_kwargs["lambda_bounds"])
    if "lambda_grid" in cfg_kwargs and cfg_kwargs["lambda_grid"] is not None:
        cfg_kwargs["lambda_grid"] = [
            np.atleast_1d(np.asarray(g, dtype=float)) for g in cfg_kwargs["lambda_grid"]
        ]
    cfg_kwargs.setdefault("seed", default_seed)
    try:
        return IboConfig(proposal=ProposalConfig(**prop_kwargs), **cfg_kwargs)
    except (TypeError, ValueError) as exc:
        raise ServiceError(400, "bad_override", str(exc)) from exc


# ---------------------------------------------------------------------------
# HTTP layer


class CreateSessionBody(BaseModel):
    objective: str
    seed: int = 0


class EvaluateBody(BaseModel):
    x: list[float]


class RunIboBody(BaseModel):
    mode: str = "grid"
    overrides: dict | None = None


class ContinueBody(BaseModel):
    estimate_id: str
    iterations: int
    prefix: int | None = None


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    """Build the application; ``data_dir`` falls back to the environment
    variable and then to ./strategist-data."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, "strategist-data")
    store = SessionStore(data_dir)
    app = FastAPI(title="strategist demonstration service")
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "code": "validation",
                "message": "request body failed validation",
                "detail": exc.errors(),
            },
        )

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        sess = store.create_session(body.objective, body.seed)
        return {
            "id": sess.id,
            "objective": sess.objective_name,
            "space": {
                "lower": sess.objective.space.lower.tolist(),
                "upper": sess.objective.space.upper.tolist(),
            },
        }

    @app.post("/sessions/{sid}/evaluate")
    def evaluate(sid: str, body: EvaluateBody):
        fval, index = store.evaluate(sid, body.x)
        return {"f": fval, "trial_index": index}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return store.snapshot(sid)

    @app.post("/sessions/{sid}/ibo")
    def run_ibo(sid: str, body: RunIboBody):
        return store.run_ibo(sid, body.mode, body.overrides)

    @app.post("/sessions/{sid}/continue")
    def continue_bo(sid: str, body: ContinueBody):
        run = store.continue_bo(sid, body.estimate_id, body.iterations, body.prefix)
        return {"run_id": run.run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return store.run_snapshot(run_id)

    return app
