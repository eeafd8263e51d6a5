"""Orchestrates scenario-tree execution over one store.

The engine runs trajectory segments, materializes branch starts from
checkpoints (counting delta applications as replay), marches incrementally
over dirty sets when asked, and memoizes suffixes keyed by (simulator,
params digest, state digest, absolute step unless time-invariant, horizon).
A key hit links the donor segment instead of recomputing: determinism makes
equal keys guarantee bit-identical suffixes.
"""

from __future__ import annotations

import hashlib
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from . import lineage
from .cost_model import FRESH, REPLAY, REUSED, CostLedger
from .errors import (
    BranchSimError,
    CorruptLineage,
    InvalidRange,
    InvalidWorkerCount,
    NotYetSimulated,
)
from .scenario_tree import (
    STATUS_COMPLETE,
    STATUS_FAILED,
    STATUS_REUSED,
    STATUS_RUNNING,
    Annotation,
    Forest,
    ScenarioNode,
    ScenarioTree,
    SuffixLink,
)
from .sim_core import (
    FieldState,
    ParamSet,
    SimulatorSpec,
    canonical_params_json,
    compute_cells,
    changed_indices,
    forcing_difference_cells,
    global_params_changed,
    init_state,
    nonzero_cell_indices,
    recompute_candidates,
    step_full,
    step_incremental,
)
from .snapshot_store import Store, digest_state


@dataclass(frozen=True)
class SuffixKey:
    """Exact-match key under which a finished trajectory suffix is reusable."""

    simulator_id: str
    params_digest: str
    state_digest: bytes
    step_index: Optional[int]  # None when the simulator is time-invariant
    horizon: int


@dataclass(frozen=True)
class SuffixEntry:
    node_id: str
    from_step: int
    until_step: int


class SuffixMemo:
    """Concurrent lookup table with first-writer-wins registration."""

    def __init__(self):
        self._table: dict[SuffixKey, SuffixEntry] = {}
        self._lock = threading.Lock()

    def register(self, key: SuffixKey, entry: SuffixEntry) -> SuffixEntry:
        with self._lock:
            return self._table.setdefault(key, entry)

    def lookup(self, key: SuffixKey) -> Optional[SuffixEntry]:
        with self._lock:
            return self._table.get(key)

    def __len__(self) -> int:
        return len(self._table)


@dataclass(frozen=True)
class RunRequest:
    node_id: str
    until_step: int
    incremental: bool = False


@dataclass(frozen=True)
class ReflectStats:
    """Per-step divergence of a reflect re-run against the original window."""

    changed_per_step: tuple
    recomputed_cells: int
    identical: bool


def params_digest(params: ParamSet) -> str:
    return hashlib.sha256(canonical_params_json(params).encode()).hexdigest()


class Engine:
    """Store + forest + ledger + suffix memo behind one run surface."""

    def __init__(self, store: Store, forest: Optional[Forest] = None, ledger: Optional[CostLedger] = None):
        self.store = store
        self.forest = forest if forest is not None else Forest(store.spec)
        self.ledger = ledger if ledger is not None else CostLedger()
        self.memo = SuffixMemo()
        self._node_locks: dict[str, threading.Lock] = {}
        self._locks_lock = threading.Lock()

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(cls, store_path, spec: SimulatorSpec, checkpoint_interval: int = 10) -> "Engine":
        return cls(Store.create(store_path, spec, checkpoint_interval))

    @classmethod
    def open(cls, store_path) -> "Engine":
        store = Store.open(store_path)
        forest = Forest.from_manifests(store.spec, store.tree_manifests)
        ledger = CostLedger.from_payload(store.ledger_payload)
        return cls(store, forest, ledger)

    def save(self) -> None:
        self.store.tree_manifests = self.forest.to_manifests()
        self.store.ledger_payload = self.ledger.to_payload()
        self.store.save_manifest()

    def close(self) -> None:
        self.save()
        self.store.close()

    @property
    def spec(self) -> SimulatorSpec:
        return self.store.spec

    def _node_lock(self, node_id: str) -> threading.Lock:
        with self._locks_lock:
            return self._node_locks.setdefault(node_id, threading.Lock())

    # -- tree construction -------------------------------------------------

    def new_tree(self, params: ParamSet, seed_cells: Mapping[int, float]) -> ScenarioTree:
        state = init_state(self.spec, seed_cells)
        tree = self.forest.create_tree(self.spec, params, state)
        self.store.create_segment(tree.root_id, 0, state)
        self.ledger.register(tree.root_id)
        self.save()
        return tree

    def branch(
        self,
        parent_id: str,
        branch_step: int,
        overrides: Mapping,
        annotations: Iterable[Annotation] = (),
    ) -> ScenarioNode:
        node = self.forest.branch_at(self.store, parent_id, branch_step, overrides, annotations)
        self.ledger.register(node.node_id)
        self.save()
        return node

    # -- execution ---------------------------------------------------------

    def materialize_branch_start(self, node_id: str) -> FieldState:
        """Reconstruct the branch-start state from the parent's checkpoints,
        verify it against the recorded digest, and open the child segment."""
        node = self.forest.node(node_id)
        bp = node.branch_point
        if bp is None:
            raise BranchSimError(f"{node_id} is a root; its segment exists from creation")
        state, applied = lineage.resolve(self.store, self.forest, node.parent_id, bp.branch_step)
        if digest_state(self.spec, state).value != bp.parent_state_digest.value:
            raise CorruptLineage(
                f"reconstructed state at step {bp.branch_step} does not match the branch digest of {node_id}"
            )
        self.store.create_segment(node_id, bp.branch_step, state)
        self.ledger.record_step(node_id, REPLAY, applied)
        return state

    def _suffix_key(self, params_dig: str, state: FieldState, until: int) -> SuffixKey:
        return SuffixKey(
            simulator_id=self.spec.simulator_id,
            params_digest=params_dig,
            state_digest=digest_state(self.spec, state).value,
            step_index=None if self.spec.time_invariant else state.step_index,
            horizon=until - state.step_index,
        )

    def run(self, request: RunRequest) -> ScenarioNode:
        """Run a node to `request.until_step`, reusing a stored suffix when a
        memo key matches; rerunning an already-covered request is a no-op."""
        node = self.forest.node(request.node_id)
        with self._node_lock(node.node_id):
            return self._run_locked(node, request)

    def _run_locked(self, node: ScenarioNode, request: RunRequest) -> ScenarioNode:
        until = int(request.until_step)
        if until <= node.end_step and node.status in (STATUS_COMPLETE, STATUS_REUSED):
            return node
        if node.suffix_link is not None and until > node.end_step:
            raise BranchSimError(f"{node.node_id} ends in a reused suffix; extend the donor instead")
        node.effective_params.ensure_stable(self.spec)
        try:
            if not self.store.has_segment(node.node_id):
                self.materialize_branch_start(node.node_id)
            node.status = STATUS_RUNNING
            state = self.store.get_state_at(node.node_id, node.end_step)
            params = node.effective_params
            p_digest = params_digest(params)
            dirty = self._initial_dirty(node, state) if request.incremental else None
            collected: list[tuple[int, bytes]] = []
            reused = False
            while state.step_index < until:
                key = self._suffix_key(p_digest, state, until)
                entry = self.memo.lookup(key)
                if entry is not None and entry.node_id != node.node_id:
                    node.suffix_link = SuffixLink(
                        donor_id=entry.node_id,
                        from_step=state.step_index,
                        donor_from_step=entry.from_step,
                        until_step=until,
                    )
                    self.ledger.record_step(node.node_id, REUSED, until - state.step_index)
                    node.end_step = until
                    node.status = STATUS_REUSED
                    reused = True
                    break
                collected.append((state.step_index, key.state_digest))
                if request.incremental:
                    if dirty is None:
                        # No sound dirty set for this start: do one full step,
                        # then march on its change set.
                        nxt = step_full(self.spec, params, state)
                        dirty = frozenset(
                            int(i) for i in changed_indices(self.spec, state.cells, nxt.cells)
                        )
                    else:
                        nxt, dirty = step_incremental(self.spec, params, state, dirty)
                else:
                    nxt = step_full(self.spec, params, state)
                self.store.append_step(node.node_id, state, nxt)
                self.ledger.record_step(node.node_id, FRESH)
                node.end_step = nxt.step_index
                state = nxt
            if not reused:
                node.status = STATUS_COMPLETE
                for step, digest in collected:
                    key = SuffixKey(
                        simulator_id=self.spec.simulator_id,
                        params_digest=p_digest,
                        state_digest=digest,
                        step_index=None if self.spec.time_invariant else step,
                        horizon=until - step,
                    )
                    self.memo.register(key, SuffixEntry(node.node_id, step, until))
        except Exception as exc:
            node.status = STATUS_FAILED
            node.failure = f"{type(exc).__name__}: {exc}"
            self.save()
            raise
        self.save()
        return node

    def _initial_dirty(self, node: ScenarioNode, state: FieldState) -> Optional[frozenset]:
        """Sound dirty seed for incremental marching, or None to force one
        full step first (a params change at a branch invalidates the
        parent's change set)."""
        seg = self.store.segment(node.node_id)
        delta = seg.deltas.get(state.step_index)
        if delta is not None:
            # The node's own last delta was produced under its own params.
            return frozenset(int(i) for i in delta.indices)
        if node.parent_id is None and state.step_index == 0:
            # Init states sit on a zero background, which both simulators fix.
            return frozenset(int(i) for i in nonzero_cell_indices(self.spec, state.cells))
        return None

    def run_tree(
        self,
        until_step: int,
        max_workers: int = 1,
        node_ids: Optional[Iterable[str]] = None,
        incremental: bool = False,
    ) -> list[ScenarioNode]:
        """Run every candidate node to `until_step`, parents before children.

        A child is scheduled only once its parent has finished this round
        (conservatively stronger than completing through the branch step).
        One node's failure is recorded and never blocks its siblings.
        """
        if max_workers < 1:
            raise InvalidWorkerCount(f"max_workers must be >= 1, got {max_workers}")
        until = int(until_step)
        if node_ids is None:
            candidates = {
                n.node_id: n
                for n in self.forest.all_nodes()
                if n.end_step < until and n.status != STATUS_FAILED and n.suffix_link is None
            }
        else:
            candidates = {nid: self.forest.node(nid) for nid in node_ids}
        done: set[str] = set()
        failed: set[str] = set()

        def ready(node: ScenarioNode) -> bool:
            if node.parent_id is None or node.parent_id not in candidates:
                parent_ok = True
            else:
                parent_ok = node.parent_id in done
            return parent_ok and node.parent_id not in failed

        results: list[ScenarioNode] = []
        pending = dict(candidates)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {}
            while pending or futures:
                startable = sorted(
                    (nid for nid, n in pending.items() if ready(n)),
                )
                for nid in startable:
                    node = pending.pop(nid)
                    futures[pool.submit(self.run, RunRequest(nid, until, incremental))] = nid
                if not futures:
                    # Remaining nodes depend on failed ancestors.
                    for nid, node in pending.items():
                        node.status = STATUS_FAILED
                        node.failure = "ancestor failed"
                        failed.add(nid)
                    pending.clear()
                    break
                finished, _ = wait(futures, return_when=FIRST_COMPLETED)
                for future in finished:
                    nid = futures.pop(future)
                    try:
                        results.append(future.result())
                        done.add(nid)
                    except Exception:
                        failed.add(nid)
                        results.append(self.forest.node(nid))
        self.save()
        return results

    # -- reflect -----------------------------------------------------------

    def reflect_update(
        self,
        node_id: str,
        new_overrides: Mapping,
        window: tuple[int, int],
    ) -> tuple[ScenarioNode, ReflectStats]:
        """Re-run a simulated window with overrides, recomputing only cells
        reachable from the parameter change; all other cells are taken from
        the original run, bit-exactly equal to full re-stepping.

        Identical parameters short-circuit to a donor link on the original.
        """
        w0, w1 = int(window[0]), int(window[1])
        if w1 <= w0:
            raise InvalidRange(f"reflect window [{w0}, {w1}] must span at least one step")
        node = self.forest.node(node_id)
        if not (node.start_step <= w0 and w1 <= node.end_step):
            raise NotYetSimulated(
                f"window [{w0}, {w1}] outside simulated range {node.window} of {node_id}"
            )
        child = self.branch(node_id, w0, new_overrides)
        if child.end_step >= w1 and child.status in (STATUS_COMPLETE, STATUS_REUSED):
            return child, ReflectStats(changed_per_step=(), recomputed_cells=0, identical=False)
        with self._node_lock(child.node_id):
            if not self.store.has_segment(child.node_id):
                self.materialize_branch_start(child.node_id)
            old_params = node.effective_params
            new_params = child.effective_params
            if new_params == old_params:
                child.suffix_link = SuffixLink(
                    donor_id=node_id, from_step=w0, donor_from_step=w0, until_step=w1
                )
                self.ledger.record_step(child.node_id, REUSED, w1 - w0)
                child.end_step = w1
                child.status = STATUS_REUSED
                self.save()
                return child, ReflectStats(
                    changed_per_step=tuple(0 for _ in range(w1 - w0)),
                    recomputed_cells=0,
                    identical=True,
                )
            child.status = STATUS_RUNNING
            try:
                stats = self._reflect_steps(node, child, old_params, new_params, w0, w1)
            except Exception as exc:
                child.status = STATUS_FAILED
                child.failure = f"{type(exc).__name__}: {exc}"
                self.save()
                raise
            child.status = STATUS_COMPLETE
            self.save()
            return child, stats

    def _reflect_steps(self, node, child, old_params, new_params, w0: int, w1: int) -> ReflectStats:
        spec = self.spec
        recompute_all = global_params_changed(old_params, new_params)
        all_idx = np.arange(spec.n_cells, dtype=np.int64)
        state = self.store.get_state_at(child.node_id, w0)
        dirty: frozenset = frozenset()
        changed_per_step = []
        recomputed = 0
        for t in range(w0, w1):
            old_next = lineage.resolve_state(self.store, self.forest, node.node_id, t + 1)
            if recompute_all:
                cand = all_idx
            else:
                forced = forcing_difference_cells(spec, old_params, new_params, t)
                cand = recompute_candidates(spec, new_params, state, dirty)
                cand = np.union1d(cand, forced)
            cells = old_next.cells.copy()
            if cand.size:
                values = compute_cells(spec, new_params, state, cand)
                cells[cand] = values
            recomputed += int(cand.size)
            nxt = FieldState(step_index=t + 1, cells=cells)
            diff = changed_indices(spec, old_next.cells, cells)
            dirty = frozenset(int(i) for i in diff)
            changed_per_step.append(len(dirty))
            self.store.append_step(child.node_id, state, nxt)
            self.ledger.record_step(child.node_id, FRESH)
            child.end_step = t + 1
            state = nxt
        return ReflectStats(
            changed_per_step=tuple(changed_per_step),
            recomputed_cells=recomputed,
            identical=all(c == 0 for c in changed_per_step),
        )
