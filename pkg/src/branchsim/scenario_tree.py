"""Branching structure of scenario trajectories.

A tree has one root trajectory; children branch from a parent at a recorded
(step, state digest) point with parameter overrides. A `Forest` holds many
trees over one store so separately seeded scenarios can share a digest-keyed
suffix memo. Node ids are deterministic: roots are numbered in creation
order within a forest ("r0", "r1", ...) and children within their tree
("r0n1", "r0n2", ...), so identical construction sequences yield identical
manifests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import (
    InvalidAnnotation,
    NotYetSimulated,
    StepNotStored,
    UnknownNode,
)
from . import lineage
from .sim_core import FieldState, ParamSet, SimulatorSpec, default_params
from .snapshot_store import Digest, Store, digest_state

STATUS_PENDING = "pending"
STATUS_RUNNING = "running"
STATUS_COMPLETE = "complete"
STATUS_REUSED = "reused"
STATUS_FAILED = "failed"

ANNOTATION_KINDS = ("descriptive", "prescriptive", "evaluative", "conditional")


@dataclass(frozen=True)
class Annotation:
    """Prediction-kind marker attached to a scenario node."""

    kind: str
    text: str

    def __post_init__(self) -> None:
        if self.kind not in ANNOTATION_KINDS:
            raise InvalidAnnotation(f"unknown annotation kind {self.kind!r}")
        if self.kind == "conditional" and not self.text.strip():
            raise InvalidAnnotation("conditional annotations must carry the prescribed action")


@dataclass(frozen=True)
class BranchPoint:
    branch_step: int
    parent_state_digest: Digest
    overrides: dict


@dataclass(frozen=True)
class SuffixLink:
    """Donor reference covering this node's steps in (from_step, until_step]."""

    donor_id: str
    from_step: int
    donor_from_step: int
    until_step: int


@dataclass(eq=False)
class ScenarioNode:
    node_id: str
    parent_id: Optional[str]
    branch_point: Optional[BranchPoint]
    effective_params: ParamSet
    start_step: int
    end_step: int
    status: str = STATUS_PENDING
    annotations: list = field(default_factory=list)
    suffix_link: Optional[SuffixLink] = None
    failure: Optional[str] = None

    @property
    def window(self) -> tuple[int, int]:
        return (self.start_step, self.end_step)


def overrides_key(overrides: Mapping) -> str:
    """Canonical form used for duplicate-branch detection."""
    items = dict(overrides)
    if "source_cells" in items:
        items["source_cells"] = sorted(int(i) for i in items["source_cells"])
    import json

    return json.dumps(items, sort_keys=True, separators=(",", ":"))


class ScenarioTree:
    """Single-rooted tree with a single-writer mutation lock."""

    def __init__(self, spec: SimulatorSpec, root: ScenarioNode):
        self.spec = spec
        self.nodes: dict[str, ScenarioNode] = {root.node_id: root}
        self.root_id = root.node_id
        self._child_seq = 0
        self._lock = threading.Lock()

    @classmethod
    def create_root(
        cls,
        spec: SimulatorSpec,
        params: ParamSet,
        initial_state: FieldState,
        root_id: str = "r0",
    ) -> "ScenarioTree":
        params.ensure_stable(spec)
        if initial_state.step_index != 0:
            raise ValueError("root trajectories start at step 0")
        root = ScenarioNode(
            node_id=root_id,
            parent_id=None,
            branch_point=None,
            effective_params=params,
            start_step=0,
            end_step=0,
        )
        return cls(spec, root)

    @property
    def root(self) -> ScenarioNode:
        return self.nodes[self.root_id]

    def node(self, node_id: str) -> ScenarioNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r}") from None

    def children(self, node_id: str) -> list[ScenarioNode]:
        return [n for n in list(self.nodes.values()) if n.parent_id == node_id]

    def find_duplicate(self, parent_id: str, branch_step: int, overrides: Mapping) -> Optional[ScenarioNode]:
        key = overrides_key(overrides)
        for child in self.children(parent_id):
            bp = child.branch_point
            if bp and bp.branch_step == branch_step and overrides_key(bp.overrides) == key:
                return child
        return None

    def branch_at(
        self,
        store: Store,
        parent_id: str,
        branch_step: int,
        overrides: Mapping,
        annotations: Iterable[Annotation] = (),
        container=None,
    ) -> ScenarioNode:
        """Create a child at `branch_step` with overrides applied.

        No simulation happens here; the child's segment is materialized when
        it first runs. A duplicate (same step, same overrides) returns the
        existing child instead of a new node.
        """
        container = container if container is not None else self
        with self._lock:
            parent = self.node(parent_id)
            if branch_step > parent.end_step:
                raise NotYetSimulated(
                    f"branch step {branch_step} beyond simulated end {parent.end_step} of {parent_id}"
                )
            if branch_step < parent.start_step:
                raise StepNotStored(
                    f"branch step {branch_step} precedes window of {parent_id}; branch the ancestor instead"
                )
            existing = self.find_duplicate(parent_id, branch_step, overrides)
            if existing is not None:
                return existing
            merged = parent.effective_params.with_overrides(overrides)
            merged.ensure_stable(self.spec)
            parent_state = lineage.resolve_state(store, container, parent_id, branch_step)
            digest = digest_state(self.spec, parent_state)
            self._child_seq += 1
            node = ScenarioNode(
                node_id=f"{self.root_id}n{self._child_seq}",
                parent_id=parent_id,
                branch_point=BranchPoint(
                    branch_step=branch_step,
                    parent_state_digest=digest,
                    overrides=dict(overrides),
                ),
                effective_params=merged,
                start_step=branch_step,
                end_step=branch_step,
                annotations=list(annotations),
            )
            self.nodes[node.node_id] = node
            return node

    def annotate(self, node_id: str, kind: str, text: str) -> ScenarioNode:
        with self._lock:
            node = self.node(node_id)
            node.annotations.append(Annotation(kind=kind, text=text))
            return node

    def terminal_scenarios(self) -> list[ScenarioNode]:
        """Nodes whose trajectory constitutes a distinct scenario outcome:
        leaves, plus any node simulated past all of its branch points."""
        out = []
        for node in list(self.nodes.values()):
            kids = self.children(node.node_id)
            if not kids:
                out.append(node)
            elif node.end_step > max(k.branch_point.branch_step for k in kids):
                out.append(node)
        return out

    def validate(self, store: Store, container=None) -> list[str]:
        """Structural and digest-chain violations; empty list means valid."""
        container = container if container is not None else self
        violations: list[str] = []
        roots = [n for n in self.nodes.values() if n.parent_id is None]
        if len(roots) != 1:
            violations.append(f"expected exactly one root, found {len(roots)}")
        for node in self.nodes.values():
            if node.parent_id is None:
                continue
            if node.parent_id not in self.nodes:
                violations.append(f"{node.node_id}: parent {node.parent_id} missing")
                continue
            # cycle check: walk to a root with a step budget
            seen = set()
            cur = node
            while cur.parent_id is not None:
                if cur.node_id in seen:
                    violations.append(f"cycle through {node.node_id}")
                    break
                seen.add(cur.node_id)
                cur = self.nodes.get(cur.parent_id)
                if cur is None:
                    break
            bp = node.branch_point
            if bp is None:
                violations.append(f"{node.node_id}: non-root node lacks a branch point")
                continue
            if node.start_step != bp.branch_step:
                violations.append(f"{node.node_id}: window starts at {node.start_step}, branch at {bp.branch_step}")
            if node.end_step < node.start_step:
                violations.append(f"{node.node_id}: inverted window")
            parent = self.nodes[node.parent_id]
            if bp.branch_step > parent.end_step:
                violations.append(
                    f"{node.node_id}: branch step {bp.branch_step} beyond parent end {parent.end_step}"
                )
                continue
            try:
                state = lineage.resolve_state(store, container, node.parent_id, bp.branch_step)
            except StepNotStored:
                violations.append(f"{node.node_id}: parent state at {bp.branch_step} not stored")
                continue
            if digest_state(self.spec, state).value != bp.parent_state_digest.value:
                violations.append(f"{node.node_id}: branch digest mismatch at step {bp.branch_step}")
        seen_pairs: dict[tuple, list] = {}
        for node in self.nodes.values():
            if node.branch_point is None:
                continue
            key = (node.parent_id, node.branch_point.branch_step, overrides_key(node.branch_point.overrides))
            seen_pairs.setdefault(key, []).append(node.node_id)
        for key, ids in seen_pairs.items():
            if len(ids) > 1:
                violations.append(f"duplicate branches {ids} at step {key[1]}")
        return violations

    # -- serialization ---------------------------------------------------

    def to_manifest(self) -> dict:
        nodes = []
        for node in list(self.nodes.values()):  # snapshot: writers may add nodes
            bp = node.branch_point
            link = node.suffix_link
            nodes.append(
                {
                    "node_id": node.node_id,
                    "parent_id": node.parent_id,
                    "branch_point": None
                    if bp is None
                    else {
                        "branch_step": bp.branch_step,
                        "parent_state_digest": bp.parent_state_digest.hex,
                        "overrides": bp.overrides,
                    },
                    "params": node.effective_params.to_config(),
                    "window": [node.start_step, node.end_step],
                    "status": node.status,
                    "annotations": [{"kind": a.kind, "text": a.text} for a in node.annotations],
                    "suffix_link": None
                    if link is None
                    else {
                        "donor_id": link.donor_id,
                        "from_step": link.from_step,
                        "donor_from_step": link.donor_from_step,
                        "until_step": link.until_step,
                    },
                    "failure": node.failure,
                }
            )
        return {"root_id": self.root_id, "child_seq": self._child_seq, "nodes": nodes}

    @classmethod
    def from_manifest(cls, spec: SimulatorSpec, payload: Mapping) -> "ScenarioTree":
        tree = None
        for record in payload["nodes"]:
            bp_payload = record.get("branch_point")
            bp = None
            if bp_payload is not None:
                bp = BranchPoint(
                    branch_step=int(bp_payload["branch_step"]),
                    parent_state_digest=Digest.from_hex(bp_payload["parent_state_digest"]),
                    overrides=dict(bp_payload["overrides"]),
                )
            link_payload = record.get("suffix_link")
            link = None
            if link_payload is not None:
                link = SuffixLink(
                    donor_id=link_payload["donor_id"],
                    from_step=int(link_payload["from_step"]),
                    donor_from_step=int(link_payload["donor_from_step"]),
                    until_step=int(link_payload["until_step"]),
                )
            node = ScenarioNode(
                node_id=record["node_id"],
                parent_id=record.get("parent_id"),
                branch_point=bp,
                effective_params=default_params(spec).with_overrides(record["params"])
                if spec.simulator_id == "vesselgrid"
                else default_params(spec),
                start_step=int(record["window"][0]),
                end_step=int(record["window"][1]),
                status=record.get("status", STATUS_PENDING),
                annotations=[Annotation(a["kind"], a["text"]) for a in record.get("annotations", [])],
                suffix_link=link,
                failure=record.get("failure"),
            )
            if tree is None:
                tree = cls.__new__(cls)
                tree.spec = spec
                tree.nodes = {}
                tree.root_id = payload["root_id"]
                tree._child_seq = int(payload.get("child_seq", 0))
                tree._lock = threading.Lock()
            tree.nodes[node.node_id] = node
        if tree is None:
            raise ValueError("tree manifest holds no nodes")
        return tree


class Forest:
    """Registry of trees sharing one store; node ids are forest-unique."""

    def __init__(self, spec: Optional[SimulatorSpec] = None):
        self.spec = spec
        self.trees: dict[str, ScenarioTree] = {}
        self._node_index: dict[str, ScenarioTree] = {}
        self._seq = 0
        self._lock = threading.Lock()

    def create_tree(self, spec: SimulatorSpec, params: ParamSet, initial_state: FieldState) -> ScenarioTree:
        with self._lock:
            if self.spec is None:
                self.spec = spec
            elif self.spec != spec:
                raise ValueError("all trees in a forest share one simulator spec")
            root_id = f"r{self._seq}"
            self._seq += 1
            tree = ScenarioTree.create_root(spec, params, initial_state, root_id=root_id)
            self.trees[root_id] = tree
            self._node_index[root_id] = tree
            return tree

    def branch_at(
        self,
        store: Store,
        parent_id: str,
        branch_step: int,
        overrides: Mapping,
        annotations: Iterable[Annotation] = (),
    ) -> ScenarioNode:
        tree = self.tree_of(parent_id)
        node = tree.branch_at(store, parent_id, branch_step, overrides, annotations, container=self)
        with self._lock:
            self._node_index[node.node_id] = tree
        return node

    def node(self, node_id: str) -> ScenarioNode:
        tree = self.tree_of(node_id)
        return tree.node(node_id)

    def tree_of(self, node_id: str) -> ScenarioTree:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r} in forest") from None

    def all_nodes(self) -> list[ScenarioNode]:
        return [n for tree in list(self.trees.values()) for n in list(tree.nodes.values())]

    def to_manifests(self) -> list:
        return [tree.to_manifest() for tree in list(self.trees.values())]

    @classmethod
    def from_manifests(cls, spec: SimulatorSpec, payloads: Iterable[Mapping]) -> "Forest":
        forest = cls(spec)
        max_seq = -1
        for payload in payloads:
            tree = ScenarioTree.from_manifest(spec, payload)
            forest.trees[tree.root_id] = tree
            for node_id in tree.nodes:
                forest._node_index[node_id] = tree
            if tree.root_id.startswith("r"):
                try:
                    max_seq = max(max_seq, int(tree.root_id[1:]))
                except ValueError:
                    pass
        forest._seq = max_seq + 1
        return forest
