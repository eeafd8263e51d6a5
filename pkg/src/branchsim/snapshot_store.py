"""Persistent, content-digested storage of trajectory segments.

A store is a directory holding one JSON manifest plus one binary file per
segment. Segment files carry the "BSIM1" container: a 6-byte magic, a u16
little-endian version, then length-prefixed snapshot and delta blocks whose
cell payloads use exactly the canonical byte layout of `sim_core`.

Each segment records a full snapshot at its start step and at every
checkpoint interval, and one delta per step, so any recorded step can be
reconstructed bit-exactly from the nearest snapshot at or below it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CorruptStore, OutOfOrderAppend, StepNotStored
from .sim_core import (
    FieldState,
    SimulatorSpec,
    canonical_bytes,
    changed_indices,
    check_state,
)

MAGIC = b"BSIM1\x00"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SEGMENT_DIR = "segments"
DEFAULT_CHECKPOINT_INTERVAL = 10

_BLOCK_SNAPSHOT = 1
_BLOCK_DELTA = 2
_BLOCK_HEADER = struct.Struct("<Bq")  # kind, step_index
_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class Digest:
    """32-byte content digest over canonical state bytes."""

    value: bytes
    algorithm_id: str = "sha256"

    def __post_init__(self) -> None:
        if len(self.value) != 32:
            raise ValueError("digest must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str, algorithm_id: str = "sha256") -> "Digest":
        return cls(value=bytes.fromhex(text), algorithm_id=algorithm_id)


def digest_bytes(payload: bytes) -> Digest:
    return Digest(value=hashlib.sha256(payload).digest())


def digest_state(spec: SimulatorSpec, state: FieldState) -> Digest:
    """Collision-resistant digest of the canonical byte form."""
    return digest_bytes(canonical_bytes(spec, state))


@dataclass(eq=False)
class StateDelta:
    """Changed cells between two consecutive steps, ascending by index."""

    step_index: int
    indices: np.ndarray
    values: np.ndarray

    @property
    def entry_count(self) -> int:
        return int(self.indices.size)


def compute_delta(spec: SimulatorSpec, prev: FieldState, nxt: FieldState) -> StateDelta:
    idx = changed_indices(spec, prev.cells, nxt.cells)
    return StateDelta(step_index=nxt.step_index, indices=idx, values=nxt.cells[idx])


def apply_delta(cells: np.ndarray, delta: StateDelta) -> None:
    cells[delta.indices] = delta.values


@dataclass(eq=False)
class SegmentRecord:
    """One stored trajectory segment: snapshots, per-step deltas, end digest."""

    node_id: str
    start_step: int
    checkpoint_interval: int
    end_step: int
    snapshots: dict = field(default_factory=dict)   # step -> cell array
    deltas: dict = field(default_factory=dict)      # step -> StateDelta
    final_digest: Digest | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def covers(self, step: int) -> bool:
        return self.start_step <= step <= self.end_step

    def nearest_snapshot_step(self, step: int) -> int:
        offset = (step - self.start_step) // self.checkpoint_interval
        return self.start_step + offset * self.checkpoint_interval


def _pack_block(kind: int, step: int, body: bytes) -> bytes:
    payload = _BLOCK_HEADER.pack(kind, step) + body
    return _LEN.pack(len(payload)) + payload


def _cells_to_bytes(spec: SimulatorSpec, cells: np.ndarray) -> bytes:
    if spec.simulator_id == "vesselgrid":
        return np.ascontiguousarray(cells, dtype="<f8").tobytes()
    return np.ascontiguousarray(cells, dtype=np.uint8).tobytes()


def _cells_from_bytes(spec: SimulatorSpec, raw: bytes) -> np.ndarray:
    dtype = "<f8" if spec.simulator_id == "vesselgrid" else np.uint8
    cells = np.frombuffer(raw, dtype=dtype)
    if cells.size != spec.n_cells:
        raise CorruptStore(f"snapshot holds {cells.size} cells, expected {spec.n_cells}")
    return cells.astype(spec.cell_dtype)


def _delta_body(spec: SimulatorSpec, delta: StateDelta) -> bytes:
    idx = np.ascontiguousarray(delta.indices, dtype="<u4")
    return _LEN.pack(delta.entry_count) + idx.tobytes() + _cells_to_bytes(spec, delta.values)


def _delta_from_body(spec: SimulatorSpec, step: int, body: bytes) -> StateDelta:
    (count,) = _LEN.unpack_from(body, 0)
    idx_end = 4 + 4 * count
    indices = np.frombuffer(body[4:idx_end], dtype="<u4").astype(np.int64)
    values = np.frombuffer(body[idx_end:], dtype="<f8" if spec.simulator_id == "vesselgrid" else np.uint8)
    if values.size != count:
        raise CorruptStore(f"delta at step {step} truncated")
    return StateDelta(step_index=step, indices=indices, values=values.astype(spec.cell_dtype))


class Store:
    """Directory-backed BSIM1 container with in-memory segment mirrors.

    Concurrency: one appender per segment at a time (per-segment lock);
    readers are free because `end_step` only advances after a step is fully
    recorded in memory and on disk.
    """

    def __init__(
        self,
        path: Path,
        spec: SimulatorSpec,
        checkpoint_interval: int,
        digest_algorithm: str = "sha256",
    ):
        self.path = Path(path)
        self.spec = spec
        self.checkpoint_interval = int(checkpoint_interval)
        self.digest_algorithm = digest_algorithm
        self.segments: dict[str, SegmentRecord] = {}
        self.tree_manifests: list = []
        self.ledger_payload: dict = {}
        self._files: dict[str, object] = {}
        self._lock = threading.Lock()
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint_interval must be positive")

    # -- lifecycle -----------------------------------------------------

    @classmethod
    def create(
        cls,
        path,
        spec: SimulatorSpec,
        checkpoint_interval: int = DEFAULT_CHECKPOINT_INTERVAL,
    ) -> "Store":
        path = Path(path)
        if path.exists() and any(path.iterdir()):
            raise CorruptStore(f"refusing to create store in non-empty {path}")
        (path / SEGMENT_DIR).mkdir(parents=True, exist_ok=True)
        store = cls(path, spec, checkpoint_interval)
        store.save_manifest()
        return store

    @classmethod
    def open(cls, path) -> "Store":
        path = Path(path)
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise CorruptStore(f"no manifest at {manifest_path}")
        try:
            manifest = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptStore(f"unreadable manifest: {exc}") from exc
        if manifest.get("format") != "BSIM1" or manifest.get("version") != FORMAT_VERSION:
            raise CorruptStore("manifest format/version mismatch")
        spec = SimulatorSpec.from_config(manifest["spec"])
        store = cls(
            path,
            spec,
            manifest.get("checkpoint_interval", DEFAULT_CHECKPOINT_INTERVAL),
            manifest.get("digest_algorithm", "sha256"),
        )
        store.tree_manifests = manifest.get("trees", [])
        store.ledger_payload = manifest.get("ledger", {})
        for node_id, entry in manifest.get("segments", {}).items():
            store.segments[node_id] = store._load_segment(node_id, entry)
        return store

    def close(self) -> None:
        self.save_manifest()
        with self._lock:
            for handle in self._files.values():
                handle.close()
            self._files.clear()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- manifest ------------------------------------------------------

    def save_manifest(self) -> None:
        manifest = {
            "format": "BSIM1",
            "version": FORMAT_VERSION,
            "digest_algorithm": self.digest_algorithm,
            "spec": self.spec.to_config(),
            "checkpoint_interval": self.checkpoint_interval,
            "segments": {
                seg.node_id: {
                    "file": f"{SEGMENT_DIR}/{seg.node_id}.seg",
                    "start_step": seg.start_step,
                    "end_step": seg.end_step,
                    "checkpoint_interval": seg.checkpoint_interval,
                    "final_digest": seg.final_digest.hex if seg.final_digest else None,
                }
                for seg in self.segments.values()
            },
            "trees": self.tree_manifests,
            "ledger": self.ledger_payload,
        }
        with self._lock:
            tmp = self.path / (MANIFEST_NAME + ".tmp")
            tmp.write_text(json.dumps(manifest, sort_keys=True, indent=1))
            os.replace(tmp, self.path / MANIFEST_NAME)

    # -- segment I/O ---------------------------------------------------

    def _segment_path(self, node_id: str) -> Path:
        return self.path / SEGMENT_DIR / f"{node_id}.seg"

    def _file(self, node_id: str):
        with self._lock:
            handle = self._files.get(node_id)
            if handle is None:
                handle = open(self._segment_path(node_id), "ab")
                self._files[node_id] = handle
            return handle

    def _write_blocks(self, node_id: str, blocks: bytes) -> None:
        handle = self._file(node_id)
        handle.write(blocks)
        handle.flush()

    def _load_segment(self, node_id: str, entry: Mapping) -> SegmentRecord:
        seg_path = self.path / entry["file"]
        try:
            raw = seg_path.read_bytes()
        except OSError as exc:
            raise CorruptStore(f"missing segment file {seg_path}") from exc
        if raw[: len(MAGIC)] != MAGIC:
            raise CorruptStore(f"bad magic in {seg_path}")
        (version,) = struct.unpack_from("<H", raw, len(MAGIC))
        if version != FORMAT_VERSION:
            raise CorruptStore(f"unsupported segment version {version} in {seg_path}")
        seg = SegmentRecord(
            node_id=node_id,
            start_step=int(entry["start_step"]),
            checkpoint_interval=int(entry["checkpoint_interval"]),
            end_step=int(entry["start_step"]),
        )
        pos = len(MAGIC) + 2
        steps_seen = []
        while pos < len(raw):
            if pos + 4 > len(raw):
                raise CorruptStore(f"truncated block header in {seg_path}")
            (length,) = _LEN.unpack_from(raw, pos)
            pos += 4
            if pos + length > len(raw):
                raise CorruptStore(f"truncated block in {seg_path}")
            kind, step = _BLOCK_HEADER.unpack_from(raw, pos)
            body = raw[pos + _BLOCK_HEADER.size : pos + length]
            pos += length
            if kind == _BLOCK_SNAPSHOT:
                seg.snapshots[step] = _cells_from_bytes(self.spec, body)
            elif kind == _BLOCK_DELTA:
                seg.deltas[step] = _delta_from_body(self.spec, step, body)
                steps_seen.append(step)
            else:
                raise CorruptStore(f"unknown block kind {kind} in {seg_path}")
        if seg.start_step not in seg.snapshots:
            raise CorruptStore(f"segment {node_id} lacks its start snapshot")
        seg.end_step = max(steps_seen) if steps_seen else seg.start_step
        expected = set(range(seg.start_step + 1, seg.end_step + 1))
        if set(steps_seen) != expected:
            raise CorruptStore(f"segment {node_id} has gaps in its delta chain")
        seg.final_digest = digest_state(self.spec, self._reconstruct(seg, seg.end_step)[0])
        return seg

    # -- operations ----------------------------------------------------

    def has_segment(self, node_id: str) -> bool:
        return node_id in self.segments

    def segment(self, node_id: str) -> SegmentRecord:
        try:
            return self.segments[node_id]
        except KeyError:
            raise StepNotStored(f"no segment for node {node_id}") from None

    def create_segment(self, node_id: str, start_step: int, state: FieldState) -> SegmentRecord:
        check_state(self.spec, state)
        if state.step_index != start_step:
            raise ValueError("start state step does not match start_step")
        if node_id in self.segments:
            raise ValueError(f"segment {node_id} already exists")
        seg = SegmentRecord(
            node_id=node_id,
            start_step=start_step,
            checkpoint_interval=self.checkpoint_interval,
            end_step=start_step,
        )
        seg.snapshots[start_step] = state.cells.copy()
        seg.final_digest = digest_state(self.spec, state)
        header = MAGIC + struct.pack("<H", FORMAT_VERSION)
        block = _pack_block(_BLOCK_SNAPSHOT, start_step, _cells_to_bytes(self.spec, state.cells))
        self._write_blocks(node_id, header + block)
        self.segments[node_id] = seg
        self.save_manifest()
        return seg

    def append_step(self, node_id: str, prev_state: FieldState, next_state: FieldState) -> SegmentRecord:
        """Record one step: its delta, plus a full snapshot when due."""
        seg = self.segment(node_id)
        with seg.lock:
            if prev_state.step_index != seg.end_step:
                raise OutOfOrderAppend(
                    f"segment {node_id} ends at {seg.end_step}, append starts at {prev_state.step_index}"
                )
            if next_state.step_index != prev_state.step_index + 1:
                raise OutOfOrderAppend("appended states must be consecutive")
            check_state(self.spec, next_state)
            step = next_state.step_index
            delta = compute_delta(self.spec, prev_state, next_state)
            blocks = _pack_block(_BLOCK_DELTA, step, _delta_body(self.spec, delta))
            snapshot_due = (step - seg.start_step) % seg.checkpoint_interval == 0
            if snapshot_due:
                blocks += _pack_block(
                    _BLOCK_SNAPSHOT, step, _cells_to_bytes(self.spec, next_state.cells)
                )
            self._write_blocks(node_id, blocks)
            seg.deltas[step] = delta
            if snapshot_due:
                seg.snapshots[step] = next_state.cells.copy()
            seg.final_digest = digest_state(self.spec, next_state)
            seg.end_step = step  # last: readers never see a half-stored step
        return seg

    def _reconstruct(self, seg: SegmentRecord, step: int) -> tuple[FieldState, int]:
        snap_step = seg.nearest_snapshot_step(step)
        cells = seg.snapshots[snap_step].copy()
        for t in range(snap_step + 1, step + 1):
            apply_delta(cells, seg.deltas[t])
        return FieldState(step_index=step, cells=cells), step - snap_step

    def get_state_at(self, node_id: str, step: int) -> FieldState:
        """Bit-exact state at `step`, from the nearest snapshot plus deltas."""
        state, _ = self.reconstruct(node_id, step)
        return state

    def reconstruct(self, node_id: str, step: int) -> tuple[FieldState, int]:
        """State at `step` plus the number of deltas applied to reach it."""
        seg = self.segment(node_id)
        if not seg.covers(step):
            raise StepNotStored(
                f"step {step} outside segment {node_id} window [{seg.start_step}, {seg.end_step}]"
            )
        return self._reconstruct(seg, step)

    def digest_at(self, node_id: str, step: int) -> Digest:
        return digest_state(self.spec, self.get_state_at(node_id, step))


def create_store(path, spec: SimulatorSpec, checkpoint_interval: int = DEFAULT_CHECKPOINT_INTERVAL) -> Store:
    return Store.create(path, spec, checkpoint_interval)


def open_store(path) -> Store:
    return Store.open(path)
