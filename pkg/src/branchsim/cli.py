"""Command-line operator surface.

Verbs:
  predict     run the declared scenario tree forward from its branch points
  reflect     re-run a simulated window with overrides, incrementally
  retrospect  branch from a historical step with alternative overrides
  report      emit the savings and equivalence summary for a store
  serve       expose the HTTP/JSON service for clients and the UI

The store path comes from --store or the BRANCHSIM_STORE environment
variable. Exit codes: 0 success, 1 failed nodes or internal errors, 2 bad
config or missing stored data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .branch_engine import Engine, RunRequest
from .equivalence import trajectory_digest
from .errors import BranchSimError, NotYetSimulated, StepNotStored
from .reporting import build_report, observation_from_config, render_table
from .scenario_tree import Annotation, STATUS_FAILED
from .sim_core import SimulatorSpec, params_for

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_BAD_INPUT = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILED):
        super().__init__(message)
        self.code = code


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_BAD_INPUT)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", EXIT_BAD_INPUT
        )


def _store_path(args) -> Path:
    path = args.store or os.environ.get("BRANCHSIM_STORE")
    if not path:
        raise CliError("no store path: pass --store or set BRANCHSIM_STORE", EXIT_BAD_INPUT)
    return Path(path)


def _open_engine(args) -> Engine:
    path = _store_path(args)
    if not (path / "manifest.json").is_file():
        raise CliError(f"no store at {path}", EXIT_BAD_INPUT)
    return Engine.open(path)


def _annotations(payloads) -> list:
    return [Annotation(kind=a["kind"], text=a["text"]) for a in payloads or []]


def _emit(args, payload: dict) -> None:
    if getattr(args, "format", "json") == "table":
        print(render_table(payload) or json.dumps(payload, indent=2))
    else:
        print(json.dumps(payload, indent=2))


def _failed_nodes(engine: Engine) -> list:
    return [n.node_id for n in engine.forest.all_nodes() if n.status == STATUS_FAILED]


def cmd_predict(args) -> int:
    config = _load_config(args.config)
    spec = SimulatorSpec.from_config(config["spec"])
    path = _store_path(args)
    if (path / "manifest.json").is_file():
        engine = Engine.open(path)
    else:
        engine = Engine.create(path, spec, int(config.get("checkpoint_interval", 10)))
    params = params_for(spec, config.get("params", {}))
    seeds = {int(k): v for k, v in config.get("seeds", {}).items()}
    horizon = int(args.until or config["horizon"])
    workers = int(args.workers or config.get("max_workers", 1))
    incremental = bool(config.get("incremental", False))

    tree = engine.new_tree(params, seeds)
    engine.run(RunRequest(tree.root_id, horizon, incremental=incremental))
    for branch in config.get("branches", []):
        engine.branch(
            tree.root_id,
            int(branch["at_step"]),
            branch.get("overrides", {}),
            _annotations(branch.get("annotations")),
        )
    engine.run_tree(horizon, max_workers=workers, incremental=incremental)

    report = build_report(engine, observation_from_config(config))
    report["root_id"] = tree.root_id
    engine.close()
    _emit(args, report)
    return EXIT_FAILED if _failed_nodes(engine) else EXIT_OK


def cmd_reflect(args) -> int:
    config = _load_config(args.config)
    section = config.get("reflect")
    if not section:
        raise CliError("config has no \"reflect\" section", EXIT_BAD_INPUT)
    engine = _open_engine(args)
    node_id = args.node or section.get("node") or next(iter(engine.forest.trees))
    window = tuple(int(v) for v in section["window"])
    overrides = section.get("overrides", {})

    child, stats = engine.reflect_update(node_id, overrides, window)
    original = trajectory_digest(engine.store, engine.forest, node_id, window)
    rerun = trajectory_digest(engine.store, engine.forest, child.node_id, window)
    engine.close()
    _emit(
        args,
        {
            "node_id": child.node_id,
            "source_node": node_id,
            "window": list(window),
            "digest_unchanged": original.combined.value == rerun.combined.value,
            "original_digest": original.combined.hex,
            "rerun_digest": rerun.combined.hex,
            "changed_cells_per_step": list(stats.changed_per_step),
            "recomputed_cells": stats.recomputed_cells,
        },
    )
    return EXIT_OK


def cmd_retrospect(args) -> int:
    config = _load_config(args.config)
    section = config.get("retrospect")
    if not section:
        raise CliError("config has no \"retrospect\" section", EXIT_BAD_INPUT)
    engine = _open_engine(args)
    node_id = args.node or section.get("node") or next(iter(engine.forest.trees))
    at_step = int(section["at_step"])
    until = int(args.until or section.get("until") or config["horizon"])

    child = engine.branch(
        node_id, at_step, section.get("overrides", {}), _annotations(section.get("annotations"))
    )
    engine.run(RunRequest(child.node_id, until))
    report = build_report(engine, observation_from_config(config))
    report["node_id"] = child.node_id
    engine.close()
    _emit(args, report)
    return EXIT_FAILED if _failed_nodes(engine) else EXIT_OK


def cmd_report(args) -> int:
    engine = _open_engine(args)
    observation = observation_from_config(_load_config(args.config) if args.config else {})
    report = build_report(engine, observation)
    engine.store.close()
    _emit(args, report)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_store_path(args))
    if args.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=args.static_dir, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario config JSON")
        p.add_argument("--store", help="store directory (default: $BRANCHSIM_STORE)")
        p.add_argument("--format", choices=("json", "table"), default="json")
        p.add_argument("--node", help="target node id")
        p.add_argument("--until", type=int, help="run horizon override")
        p.add_argument("--workers", type=int, help="worker count override")

    p = sub.add_parser("predict", help="run declared branches forward")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("reflect", help="re-run a window with overrides incrementally")
    common(p)
    p.set_defaults(func=cmd_reflect)

    p = sub.add_parser("retrospect", help="branch from a historical step")
    common(p)
    p.set_defaults(func=cmd_retrospect)

    p = sub.add_parser("report", help="emit savings and equivalence summary")
    common(p, config_required=False)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--store", help="store directory (default: $BRANCHSIM_STORE)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8300)
    p.add_argument("--static-dir", help="optional directory mounted at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (StepNotStored, NotYetSimulated) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except BranchSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
