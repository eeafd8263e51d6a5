"""Trajectory equivalence over observation projections.

Two trajectories are equivalent on an interval when their per-step observed
byte sequences match exactly. Observations either take the whole canonical
state or a rectangular region of interest, so equivalence is always relative
to what the problem actually looks at.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import hashlib

import numpy as np

from . import lineage
from .errors import InvalidObservation, InvalidRange, StepNotStored
from .sim_core import FieldState, SimulatorSpec, canonical_bytes
from .snapshot_store import Digest, Store

FULL_STATE = "full_state"
REGION_OF_INTEREST = "region_of_interest"


@dataclass(frozen=True)
class ObservationSpec:
    """What a trajectory is observed through: everything, or an ROI rectangle
    (x0, y0, width, height) in cell coordinates."""

    mode: str = FULL_STATE
    roi: Optional[tuple[int, int, int, int]] = None

    def __post_init__(self) -> None:
        if self.mode not in (FULL_STATE, REGION_OF_INTEREST):
            raise InvalidObservation(f"unknown observation mode {self.mode!r}")
        if self.mode == REGION_OF_INTEREST and self.roi is None:
            raise InvalidObservation("region_of_interest requires an roi rectangle")


def observe(spec: SimulatorSpec, state: FieldState, obs: ObservationSpec) -> bytes:
    """Canonical byte serialization of the observed projection."""
    if obs.mode == FULL_STATE:
        return canonical_bytes(spec, state)
    x0, y0, w, h = (int(v) for v in obs.roi)
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > spec.width or y0 + h > spec.height:
        raise InvalidObservation(
            f"roi {obs.roi} outside {spec.width}x{spec.height} grid"
        )
    rows = [
        state.cells[y * spec.width + x0 : y * spec.width + x0 + w]
        for y in range(y0, y0 + h)
    ]
    gathered = np.concatenate(rows)
    if spec.simulator_id == "vesselgrid":
        return np.ascontiguousarray(gathered, dtype="<f8").tobytes()
    return np.ascontiguousarray(gathered, dtype=np.uint8).tobytes()


def observation_digest(spec: SimulatorSpec, state: FieldState, obs: ObservationSpec) -> Digest:
    return Digest(value=hashlib.sha256(observe(spec, state, obs)).digest())


@dataclass(frozen=True)
class TrajectoryDigest:
    """Per-step observation digests over an interval plus their combination."""

    node_id: str
    interval: tuple[int, int]
    per_step_digests: tuple
    combined: Digest


def trajectory_digest(
    store: Store,
    container,
    node_id: str,
    interval: tuple[int, int],
    obs: ObservationSpec = ObservationSpec(),
) -> TrajectoryDigest:
    t0, t1 = int(interval[0]), int(interval[1])
    if t1 < t0:
        raise InvalidRange(f"inverted interval [{t0}, {t1}]")
    node = container.node(node_id)
    if not (node.start_step <= t0 and t1 <= node.end_step):
        raise StepNotStored(
            f"interval [{t0}, {t1}] not covered by window {node.window} of {node_id}"
        )
    per_step = []
    hasher = hashlib.sha256()
    for step in range(t0, t1 + 1):
        state = lineage.resolve_state(store, container, node_id, step)
        digest = observation_digest(store.spec, state, obs)
        per_step.append(digest)
        hasher.update(digest.value)
    return TrajectoryDigest(
        node_id=node_id,
        interval=(t0, t1),
        per_step_digests=tuple(per_step),
        combined=Digest(value=hasher.digest()),
    )


@dataclass(frozen=True)
class EquivalenceClass:
    representative_digest: Digest
    members: tuple


def partition_classes(
    store: Store,
    container,
    node_ids: Iterable[str],
    interval: tuple[int, int],
    obs: ObservationSpec = ObservationSpec(),
) -> list[EquivalenceClass]:
    """Group trajectories by combined observation digest.

    Classes are sorted by representative digest and members sorted by id, so
    output is deterministic for a given input set.
    """
    groups: dict[str, list] = {}
    digests: dict[str, Digest] = {}
    for node_id in node_ids:
        td = trajectory_digest(store, container, node_id, interval, obs)
        groups.setdefault(td.combined.hex, []).append(node_id)
        digests[td.combined.hex] = td.combined
    return [
        EquivalenceClass(representative_digest=digests[key], members=tuple(sorted(members)))
        for key, members in sorted(groups.items())
    ]
