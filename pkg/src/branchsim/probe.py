"""Space-time queries over stored trajectories.

Samples a value at continuous (x, y) coordinates and an integer step,
extracts full frames, and emits changed-cells-only frame deltas for
playback. Steps before a node's branch point resolve into its ancestors;
queries snap to recorded steps (no interpolation in time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lineage
from .errors import InvalidProbe, InvalidRange
from .sim_core import SimulatorSpec, changed_indices
from .snapshot_store import Store


@dataclass(frozen=True)
class ProbeQuery:
    node_id: str
    x: float
    y: float
    step: int


@dataclass(eq=False)
class Frame:
    step: int
    cells: np.ndarray


@dataclass(eq=False)
class FrameDelta:
    step: int
    indices: np.ndarray
    values: np.ndarray

    @property
    def entries(self) -> list:
        return [(int(i), v.item()) for i, v in zip(self.indices, self.values)]


def _lerp(a: float, b: float, t: float) -> float:
    # a + t*(b - a): exact at t == 0 and on uniform fields (b == a).
    return a + t * (b - a)


def sample_point(store: Store, container, query: ProbeQuery) -> float:
    """Bilinear interpolation over the four surrounding cells; exact cell
    value at integer coordinates."""
    spec = store.spec
    x, y = float(query.x), float(query.y)
    if not (0.0 <= x <= spec.width - 1 and 0.0 <= y <= spec.height - 1):
        raise InvalidProbe(
            f"({x}, {y}) outside [0, {spec.width - 1}] x [0, {spec.height - 1}]"
        )
    if math.isnan(x) or math.isnan(y):
        raise InvalidProbe("coordinates must be finite")
    state = lineage.resolve_state(store, container, query.node_id, int(query.step))
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    fx = x - x0
    fy = y - y0
    x1 = x0 + 1 if fx > 0.0 else x0
    y1 = y0 + 1 if fy > 0.0 else y0
    cells = state.cells
    v00 = float(cells[y0 * spec.width + x0])
    if fx == 0.0 and fy == 0.0:
        return v00
    v10 = float(cells[y0 * spec.width + x1])
    v01 = float(cells[y1 * spec.width + x0])
    v11 = float(cells[y1 * spec.width + x1])
    top = _lerp(v00, v10, fx)
    bottom = _lerp(v01, v11, fx)
    return _lerp(top, bottom, fy)


def extract_frame(store: Store, container, node_id: str, step: int) -> Frame:
    """Full cell array at `step`, resolved through the node's lineage."""
    state = lineage.resolve_state(store, container, node_id, int(step))
    return Frame(step=int(step), cells=state.cells.copy())


def frame_deltas(
    store: Store, container, node_id: str, from_step: int, to_step: int
) -> list[FrameDelta]:
    """Deltas whose fold over the frame at `from_step` reproduces every frame
    up to `to_step` bit-exactly."""
    from_step, to_step = int(from_step), int(to_step)
    if to_step <= from_step:
        raise InvalidRange(f"need from_step < to_step, got [{from_step}, {to_step}]")
    spec = store.spec
    deltas = []
    prev = lineage.resolve_state(store, container, node_id, from_step)
    for step in range(from_step + 1, to_step + 1):
        cur = lineage.resolve_state(store, container, node_id, step)
        idx = changed_indices(spec, prev.cells, cur.cells)
        deltas.append(FrameDelta(step=step, indices=idx, values=cur.cells[idx]))
        prev = cur
    return deltas


def apply_frame_delta(spec: SimulatorSpec, frame: Frame, delta: FrameDelta) -> Frame:
    """Fold one delta onto a frame, producing the next frame."""
    cells = frame.cells.copy()
    cells[delta.indices] = delta.values
    return Frame(step=delta.step, cells=cells)
