"""Deterministic grid simulators with full and dirty-set incremental stepping.

Two step rules are provided:

* ``vesselgrid`` — explicit Euler advection-diffusion on a float64 grid with
  a 5-point Laplacian, first-order upwind advection, copy-edge (no-flux)
  boundaries and a pulsatile source term, so step output depends on the
  absolute step index.
* ``maxca`` — a saturating uint8 cellular automaton where each cell becomes
  the max of itself and its 4-neighbors; step output is time-invariant.

Every output cell depends only on the previous state, and the full and
incremental paths share one kernel (`compute_cells`), so incremental
stepping is bit-for-bit identical to full stepping by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import InvalidSeed, NumericFault, UnstableParams

VESSELGRID = "vesselgrid"
MAXCA = "maxca"

# Explicit-scheme stability bounds (diffusion number and advection CFL).
MAX_DIFFUSION_NUMBER = 0.25
MAX_ADVECTION_CFL = 1.0

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SimulatorSpec:
    """Grid geometry plus the step rule it runs."""

    simulator_id: str
    width: int
    height: int
    cell_size_h: float = 1.0

    def __post_init__(self) -> None:
        if self.simulator_id not in (VESSELGRID, MAXCA):
            raise ValueError(f"unknown simulator_id {self.simulator_id!r}")
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        if self.simulator_id == VESSELGRID:
            if not (math.isfinite(self.cell_size_h) and self.cell_size_h > 0):
                raise ValueError("cell_size_h must be a positive finite real")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def time_invariant(self) -> bool:
        # Declared per simulator: the vesselgrid source is pulsatile.
        return self.simulator_id == MAXCA

    @property
    def cell_dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self.simulator_id == VESSELGRID else np.uint8)

    @property
    def cell_nbytes(self) -> int:
        return self.cell_dtype.itemsize

    def cell_index(self, x: int, y: int) -> int:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ValueError(f"cell ({x}, {y}) outside {self.width}x{self.height} grid")
        return y * self.width + x

    def to_config(self) -> dict:
        return {
            "simulator_id": self.simulator_id,
            "width": self.width,
            "height": self.height,
            "cell_size_h": self.cell_size_h,
        }

    @classmethod
    def from_config(cls, config: Mapping) -> "SimulatorSpec":
        return cls(
            simulator_id=config["simulator_id"],
            width=int(config["width"]),
            height=int(config["height"]),
            cell_size_h=float(config.get("cell_size_h", 1.0)),
        )


@dataclass(frozen=True)
class VesselgridParams:
    """Advection-diffusion parameters; see `ensure_stable` for the bounds."""

    diffusion: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    dt: float = 0.1
    source_cells: frozenset = frozenset()
    source_amp: float = 0.0
    source_period: int = 20

    def ensure_stable(self, spec: SimulatorSpec) -> None:
        for name in ("diffusion", "vx", "vy", "dt", "source_amp"):
            if not math.isfinite(getattr(self, name)):
                raise UnstableParams(f"{name} must be finite")
        if self.dt <= 0:
            raise UnstableParams("dt must be positive")
        if self.diffusion < 0:
            raise UnstableParams("diffusion must be nonnegative")
        if self.source_amp < 0:
            raise UnstableParams("source_amp must be nonnegative")
        if self.source_period < 1:
            raise UnstableParams("source_period must be a positive integer")
        h = spec.cell_size_h
        dn = self.dt * self.diffusion / (h * h)
        if dn > MAX_DIFFUSION_NUMBER:
            raise UnstableParams(
                f"diffusion number dt*D/h^2 = {dn:.6g} exceeds {MAX_DIFFUSION_NUMBER}"
            )
        cfl = self.dt * (abs(self.vx) + abs(self.vy)) / h
        if cfl > MAX_ADVECTION_CFL:
            raise UnstableParams(
                f"advection CFL dt*(|vx|+|vy|)/h = {cfl:.6g} exceeds {MAX_ADVECTION_CFL}"
            )
        for idx in self.source_cells:
            if not (0 <= int(idx) < spec.n_cells):
                raise UnstableParams(f"source cell {idx} outside grid")

    def with_overrides(self, overrides: Mapping) -> "VesselgridParams":
        unknown = set(overrides) - {
            "diffusion", "vx", "vy", "dt", "source_cells", "source_amp", "source_period",
        }
        if unknown:
            raise ValueError(f"unknown vesselgrid parameters: {sorted(unknown)}")
        fields = dict(overrides)
        if "source_cells" in fields:
            fields["source_cells"] = frozenset(int(i) for i in fields["source_cells"])
        if "source_period" in fields:
            fields["source_period"] = int(fields["source_period"])
        for key in ("diffusion", "vx", "vy", "dt", "source_amp"):
            if key in fields:
                fields[key] = float(fields[key])
        return replace(self, **fields)

    def to_config(self) -> dict:
        return {
            "diffusion": self.diffusion,
            "vx": self.vx,
            "vy": self.vy,
            "dt": self.dt,
            "source_cells": sorted(int(i) for i in self.source_cells),
            "source_amp": self.source_amp,
            "source_period": self.source_period,
        }


@dataclass(frozen=True)
class MaxcaParams:
    """The max automaton takes no parameters."""

    def ensure_stable(self, spec: SimulatorSpec) -> None:
        pass

    def with_overrides(self, overrides: Mapping) -> "MaxcaParams":
        if overrides:
            raise ValueError("maxca takes no parameters")
        return self

    def to_config(self) -> dict:
        return {}


ParamSet = Union[VesselgridParams, MaxcaParams]


def default_params(spec: SimulatorSpec) -> ParamSet:
    return VesselgridParams() if spec.simulator_id == VESSELGRID else MaxcaParams()


def params_for(spec: SimulatorSpec, config: Mapping) -> ParamSet:
    """Build a parameter set from a JSON-style mapping."""
    return default_params(spec).with_overrides(config)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Simulator state at one step: step index plus a row-major cell array."""

    step_index: int
    cells: np.ndarray

    def __post_init__(self) -> None:
        self.cells.setflags(write=False)


def check_state(spec: SimulatorSpec, state: FieldState) -> None:
    if state.cells.shape != (spec.n_cells,):
        raise ValueError(
            f"state has {state.cells.shape} cells, expected ({spec.n_cells},)"
        )
    if state.cells.dtype != spec.cell_dtype:
        raise ValueError(f"state dtype {state.cells.dtype} != {spec.cell_dtype}")
    if state.step_index < 0:
        raise ValueError("step_index must be nonnegative")
    if spec.simulator_id == VESSELGRID and np.isnan(state.cells).any():
        raise NumericFault("state contains NaN")


def init_state(spec: SimulatorSpec, seed_cells: Mapping[int, float]) -> FieldState:
    """Zero field at step 0 with the listed cells set."""
    cells = np.zeros(spec.n_cells, dtype=spec.cell_dtype)
    for idx, value in seed_cells.items():
        idx = int(idx)
        if not (0 <= idx < spec.n_cells):
            raise InvalidSeed(f"cell index {idx} outside grid of {spec.n_cells}")
        if spec.simulator_id == MAXCA:
            if isinstance(value, float) and not value.is_integer():
                raise InvalidSeed(f"maxca value {value!r} is not an integer")
            value = int(value)
            if not (0 <= value <= 255):
                raise InvalidSeed(f"maxca value {value} outside [0, 255]")
            cells[idx] = value
        else:
            value = float(value)
            if not math.isfinite(value):
                raise InvalidSeed(f"vesselgrid value {value!r} is not finite")
            cells[idx] = value
    return FieldState(step_index=0, cells=cells)


@dataclass(frozen=True)
class _NeighborMaps:
    up: np.ndarray
    down: np.ndarray
    left: np.ndarray
    right: np.ndarray


@lru_cache(maxsize=32)
def _neighbor_maps(width: int, height: int) -> _NeighborMaps:
    # Copy-edge clamping: an out-of-grid neighbor maps to the cell itself,
    # which realizes the no-flux boundary for the diffusion stencil.
    idx = np.arange(width * height, dtype=np.int64)
    x = idx % width
    y = idx // width
    up = np.where(y > 0, idx - width, idx)
    down = np.where(y < height - 1, idx + width, idx)
    left = np.where(x > 0, idx - 1, idx)
    right = np.where(x < width - 1, idx + 1, idx)
    for arr in (up, down, left, right):
        arr.setflags(write=False)
    return _NeighborMaps(up=up, down=down, left=left, right=right)


@lru_cache(maxsize=64)
def _source_mask(spec: SimulatorSpec, params: VesselgridParams) -> np.ndarray:
    mask = np.zeros(spec.n_cells, dtype=bool)
    if params.source_cells:
        mask[np.fromiter((int(i) for i in params.source_cells), dtype=np.int64)] = True
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=32)
def _all_indices(n_cells: int) -> np.ndarray:
    idx = np.arange(n_cells, dtype=np.int64)
    idx.setflags(write=False)
    return idx


def source_value(params: ParamSet, step_index: int) -> float:
    """Pulsatile forcing amplitude applied at `step_index`; 0.0 when inactive."""
    if not isinstance(params, VesselgridParams):
        return 0.0
    if params.source_amp == 0.0 or not params.source_cells:
        return 0.0
    return params.source_amp * (
        1.0 + math.sin(_TWO_PI * step_index / params.source_period)
    )


def compute_cells(
    spec: SimulatorSpec,
    params: ParamSet,
    state: FieldState,
    indices: np.ndarray,
) -> np.ndarray:
    """Post-step values for the given cells, reading only the previous state.

    This is the single kernel behind `step_full`, `step_incremental`, and the
    engine's reflect stepping; running it on any subset of cells yields the
    same bits per cell as running it on the whole grid.
    """
    nb = _neighbor_maps(spec.width, spec.height)
    cells = state.cells
    center = cells[indices]
    up = cells[nb.up[indices]]
    down = cells[nb.down[indices]]
    left = cells[nb.left[indices]]
    right = cells[nb.right[indices]]

    if spec.simulator_id == MAXCA:
        out = np.maximum(center, up)
        np.maximum(out, down, out=out)
        np.maximum(out, left, out=out)
        np.maximum(out, right, out=out)
        return out

    p = params
    h = spec.cell_size_h
    s = source_value(p, state.step_index)
    if s != 0.0:
        src = np.where(_source_mask(spec, p)[indices], s, 0.0)
    else:
        src = 0.0
    lap = ((up + down) + (left + right) - 4.0 * center) / (h * h)
    if p.vx > 0.0:
        dudx = (center - left) / h
    elif p.vx < 0.0:
        dudx = (right - center) / h
    else:
        dudx = 0.0
    if p.vy > 0.0:
        dudy = (center - up) / h
    elif p.vy < 0.0:
        dudy = (down - center) / h
    else:
        dudy = 0.0
    adv = p.vx * dudx + p.vy * dudy
    out = center + p.dt * (p.diffusion * lap - adv + src)
    if np.isnan(out).any():
        raise NumericFault(f"NaN produced at step {state.step_index + 1}")
    return out


def step_full(spec: SimulatorSpec, params: ParamSet, state: FieldState) -> FieldState:
    """Advance the whole grid one step."""
    params.ensure_stable(spec)
    check_state(spec, state)
    out = compute_cells(spec, params, state, _all_indices(spec.n_cells))
    return FieldState(step_index=state.step_index + 1, cells=out)


def _bits_differ(spec: SimulatorSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Bitwise change detection: distinguishes -0.0 from 0.0 and never
    # epsilon-thresholds. NaN is excluded from states by invariant.
    if spec.cell_dtype == np.float64:
        return a.view(np.uint64) != b.view(np.uint64)
    return a != b


def changed_indices(
    spec: SimulatorSpec, prev_cells: np.ndarray, next_cells: np.ndarray
) -> np.ndarray:
    """Ascending indices of cells whose bit pattern changed."""
    return np.nonzero(_bits_differ(spec, prev_cells, next_cells))[0]


def nonzero_cell_indices(spec: SimulatorSpec, cells: np.ndarray) -> np.ndarray:
    """Ascending indices of cells whose bit pattern differs from +0."""
    zero = np.zeros(1, dtype=spec.cell_dtype)
    return np.nonzero(_bits_differ(spec, cells, np.broadcast_to(zero, cells.shape)))[0]


def _forcing_changed(params: ParamSet, step_index: int) -> bool:
    """True when this step's source forcing differs from the previous step's."""
    if not isinstance(params, VesselgridParams):
        return False
    s_now = source_value(params, step_index)
    if step_index == 0:
        # No prior forcing to compare: any nonzero injection must recompute.
        return s_now != 0.0
    return s_now != source_value(params, step_index - 1)


def recompute_candidates(
    spec: SimulatorSpec,
    params: ParamSet,
    state: FieldState,
    dirty: Iterable[int],
) -> np.ndarray:
    """Cells whose stencil intersects the dirty set, plus source cells whose
    forcing changes this step. Sorted ascending, deduplicated."""
    d = np.fromiter((int(i) for i in dirty), dtype=np.int64)
    if d.size and (d.min() < 0 or d.max() >= spec.n_cells):
        raise ValueError("dirty set contains out-of-range indices")
    nb = _neighbor_maps(spec.width, spec.height)
    parts = [d, nb.up[d], nb.down[d], nb.left[d], nb.right[d]]
    if _forcing_changed(params, state.step_index):
        parts.append(np.fromiter(sorted(params.source_cells), dtype=np.int64))
    return np.unique(np.concatenate(parts))


def step_incremental(
    spec: SimulatorSpec,
    params: ParamSet,
    state: FieldState,
    dirty: Iterable[int],
) -> tuple[FieldState, frozenset]:
    """Advance one step recomputing only cells affected by the dirty set.

    The caller contract: `dirty` is exactly the set of cells that changed at
    the most recent step (for an initial state, its nonzero cells). Output is
    bit-identical to `step_full` on the same input; the returned dirty set
    lists cells whose bit pattern differs from the input state.
    """
    params.ensure_stable(spec)
    check_state(spec, state)
    cand = recompute_candidates(spec, params, state, dirty)
    out = state.cells.copy()
    if cand.size:
        values = compute_cells(spec, params, state, cand)
        changed = cand[_bits_differ(spec, values, state.cells[cand])]
        out[cand] = values
    else:
        changed = np.empty(0, dtype=np.int64)
    next_state = FieldState(step_index=state.step_index + 1, cells=out)
    return next_state, frozenset(int(i) for i in changed)


def forcing_difference_cells(
    spec: SimulatorSpec, old: ParamSet, new: ParamSet, step_index: int
) -> np.ndarray:
    """Cells where the forcing applied at `step_index` differs between two
    parameter sets. Used by reflect stepping to seed recomputation."""
    if not isinstance(old, VesselgridParams) or not isinstance(new, VesselgridParams):
        return np.empty(0, dtype=np.int64)
    s_old = source_value(old, step_index)
    s_new = source_value(new, step_index)
    cells_old = old.source_cells if s_old != 0.0 else frozenset()
    cells_new = new.source_cells if s_new != 0.0 else frozenset()
    diff: set = set()
    if s_old != s_new:
        diff |= cells_old & cells_new
    diff |= cells_new - cells_old
    diff |= cells_old - cells_new
    return np.fromiter(sorted(int(i) for i in diff), dtype=np.int64)


def global_params_changed(old: ParamSet, new: ParamSet) -> bool:
    """True when a non-source parameter differs, so every cell's update rule
    changes and incremental reflect degenerates to full recomputation."""
    if isinstance(old, MaxcaParams) and isinstance(new, MaxcaParams):
        return False
    assert isinstance(old, VesselgridParams) and isinstance(new, VesselgridParams)
    return (
        old.diffusion != new.diffusion
        or old.vx != new.vx
        or old.vy != new.vy
        or old.dt != new.dt
    )


def canonical_bytes(spec: SimulatorSpec, state: FieldState) -> bytes:
    """Canonical byte form of the cell array: little-endian, row-major, raw
    bit patterns (so -0.0 and 0.0 serialize distinctly); step index excluded."""
    check_state(spec, state)
    if spec.simulator_id == VESSELGRID:
        return np.ascontiguousarray(state.cells, dtype="<f8").tobytes()
    return np.ascontiguousarray(state.cells, dtype=np.uint8).tobytes()


def states_equal(spec: SimulatorSpec, a: FieldState, b: FieldState) -> bool:
    """Bitwise cell equality (step indices not compared)."""
    return not _bits_differ(spec, a.cells, b.cells).any()


def canonical_params_json(params: ParamSet) -> str:
    import json

    return json.dumps(params.to_config(), sort_keys=True, separators=(",", ":"))
