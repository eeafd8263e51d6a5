"""HTTP/JSON surface over the engine for clients and the companion UI.

Runs are asynchronous: POST /nodes/{id}/run returns a token that is polled
via GET /runs/{token}. Mutations funnel through the engine (tree writers and
per-node run locks); reads are safe while runs progress because segment end
steps only advance after a step is fully stored.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .branch_engine import Engine, RunRequest
from .equivalence import ObservationSpec
from .errors import (
    BranchSimError,
    CorruptLineage,
    CorruptStore,
    InvalidAnnotation,
    InvalidClassCount,
    InvalidObservation,
    InvalidProbe,
    InvalidRange,
    InvalidSeed,
    InvalidWorkerCount,
    NotYetSimulated,
    NumericFault,
    OutOfOrderAppend,
    StepNotStored,
    TreeIncomplete,
    UnknownNode,
    UnstableParams,
)
from .probe import ProbeQuery, extract_frame, frame_deltas, sample_point
from .reporting import build_report
from .scenario_tree import Annotation
from .sim_core import SimulatorSpec, params_for

_STATUS_CODES = {
    UnknownNode: 404,
    StepNotStored: 404,
    NotYetSimulated: 409,
    OutOfOrderAppend: 409,
    TreeIncomplete: 409,
    UnstableParams: 422,
    InvalidSeed: 422,
    InvalidAnnotation: 422,
    InvalidObservation: 422,
    InvalidProbe: 422,
    InvalidRange: 422,
    InvalidClassCount: 422,
    InvalidWorkerCount: 422,
    NumericFault: 422,
    CorruptLineage: 500,
    CorruptStore: 500,
}


def _error_response(exc: Exception) -> JSONResponse:
    status = _STATUS_CODES.get(type(exc), 500 if isinstance(exc, BranchSimError) else 422)
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


class ServiceState:
    """Engine plus the async-run token registry."""

    def __init__(self, store_path, engine: Optional[Engine] = None):
        self.store_path = Path(store_path)
        self.engine = engine
        self.runs: dict[str, dict] = {}
        self.lock = threading.Lock()

    def require_engine(self) -> Engine:
        if self.engine is None:
            raise CorruptStore(f"no store initialized at {self.store_path}; POST /simulations first")
        return self.engine

    def ensure_engine(self, spec: SimulatorSpec, checkpoint_interval: int) -> Engine:
        with self.lock:
            if self.engine is None:
                self.engine = Engine.create(self.store_path, spec, checkpoint_interval)
            elif self.engine.spec != spec:
                raise UnstableParams(
                    f"store already holds spec {self.engine.spec.to_config()}, request differs"
                )
            return self.engine


def create_app(store_path, open_existing: bool = True) -> FastAPI:
    state = ServiceState(store_path)
    if open_existing and (Path(store_path) / "manifest.json").is_file():
        state.engine = Engine.open(store_path)

    app = FastAPI(title="branchsim", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = state

    @app.exception_handler(BranchSimError)
    async def _branchsim_error(request, exc):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return _error_response(exc)

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "store": str(state.store_path)}

    @app.post("/simulations")
    def create_simulation(body: dict = Body(...)):
        spec = SimulatorSpec.from_config(body["spec"])
        engine = state.ensure_engine(spec, int(body.get("checkpoint_interval", 10)))
        params = params_for(spec, body.get("params", {}))
        seeds = {int(k): v for k, v in body.get("seeds", {}).items()}
        tree = engine.new_tree(params, seeds)
        return {"root_id": tree.root_id}

    @app.post("/nodes/{node_id}/branch")
    def branch(node_id: str, body: dict = Body(...)):
        engine = state.require_engine()
        at_step = int(body["at_step"])
        overrides = body.get("overrides", {})
        annotations = [
            Annotation(kind=a["kind"], text=a["text"]) for a in body.get("annotations", [])
        ]
        tree = engine.forest.tree_of(node_id)
        existing = tree.find_duplicate(node_id, at_step, overrides)
        if existing is not None:
            return JSONResponse(
                status_code=409,
                content={
                    "error": "DuplicateBranch",
                    "detail": f"branch at {at_step} with identical overrides exists",
                    "existing": existing.node_id,
                },
            )
        node = engine.branch(node_id, at_step, overrides, annotations)
        return {"node_id": node.node_id}

    @app.post("/nodes/{node_id}/run")
    def run_node(node_id: str, body: dict = Body(...)):
        engine = state.require_engine()
        engine.forest.node(node_id)  # 404 before spawning the thread
        request = RunRequest(
            node_id=node_id,
            until_step=int(body["until"]),
            incremental=bool(body.get("incremental", False)),
        )
        token = uuid.uuid4().hex
        with state.lock:
            state.runs[token] = {"status": "running", "node_id": node_id, "error": None}

        def _work():
            try:
                engine.run(request)
                with state.lock:
                    state.runs[token]["status"] = "complete"
            except Exception as exc:
                with state.lock:
                    state.runs[token]["status"] = "failed"
                    state.runs[token]["error"] = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=_work, name=f"run-{token[:8]}", daemon=True).start()
        return {"token": token}

    @app.get("/runs/{token}")
    def run_status(token: str):
        with state.lock:
            entry = state.runs.get(token)
            if entry is None:
                return JSONResponse(
                    status_code=404, content={"error": "UnknownToken", "detail": token}
                )
            return dict(entry)

    @app.get("/tree")
    def tree():
        engine = state.require_engine()
        return {
            "spec": engine.spec.to_config(),
            "checkpoint_interval": engine.store.checkpoint_interval,
            "trees": engine.forest.to_manifests(),
        }

    @app.get("/nodes/{node_id}/frames")
    def frames(
        node_id: str,
        from_step: int = Query(alias="from"),
        to_step: int = Query(alias="to"),
        delta: bool = Query(default=False),
    ):
        engine = state.require_engine()
        if to_step < from_step:
            raise InvalidRange(f"from={from_step} exceeds to={to_step}")
        if not delta:
            out = []
            for step in range(from_step, to_step + 1):
                frame = extract_frame(engine.store, engine.forest, node_id, step)
                out.append({"step": frame.step, "cells": frame.cells.tolist()})
            return {"frames": out}
        base = extract_frame(engine.store, engine.forest, node_id, from_step)
        deltas = (
            frame_deltas(engine.store, engine.forest, node_id, from_step, to_step)
            if to_step > from_step
            else []
        )
        return {
            "base": {"step": base.step, "cells": base.cells.tolist()},
            "deltas": [{"step": d.step, "entries": d.entries} for d in deltas],
        }

    @app.get("/nodes/{node_id}/probe")
    def probe(node_id: str, x: float, y: float, step: int):
        engine = state.require_engine()
        value = sample_point(engine.store, engine.forest, ProbeQuery(node_id, x, y, step))
        return {"value": value, "node_id": node_id, "x": x, "y": y, "step": step}

    @app.get("/report")
    def report():
        engine = state.require_engine()
        return build_report(engine, ObservationSpec())

    return app
