"""Step accounting and branch-gain decision logic.

Resources are measured in solver step invocations: `fresh` steps actually
computed, `replay` delta applications used to reach a branch start, and
`reused` steps satisfied by suffix memoization or donor links. The savings
report compares that total against re-simulating every terminal scenario
from step 0.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import InvalidClassCount, TreeIncomplete, UnknownNode
from .scenario_tree import STATUS_COMPLETE, STATUS_REUSED

FRESH = "fresh"
REPLAY = "replay"
REUSED = "reused"
_KINDS = (FRESH, REPLAY, REUSED)

NO_GAIN = "NoGain"
CASE_A = "BranchSavesTime_CaseA"
CASE_B = "BranchSavesTime_CaseB"


@dataclass
class NodeCosts:
    fresh: int = 0
    replay: int = 0
    reused: int = 0

    @property
    def executed(self) -> int:
        return self.fresh + self.replay


class CostLedger:
    """Monotone per-node counters; updates are atomic per counter."""

    def __init__(self):
        self._counts: dict[str, NodeCosts] = {}
        self._lock = threading.Lock()

    def register(self, node_id: str) -> None:
        with self._lock:
            self._counts.setdefault(node_id, NodeCosts())

    def record_step(self, node_id: str, kind: str, count: int = 1) -> None:
        if kind not in _KINDS:
            raise ValueError(f"unknown step kind {kind!r}")
        if count < 0:
            raise ValueError("counters only increase")
        with self._lock:
            if node_id not in self._counts:
                raise UnknownNode(f"node {node_id!r} not registered in ledger")
            costs = self._counts[node_id]
            setattr(costs, kind, getattr(costs, kind) + count)

    def counts(self, node_id: str) -> NodeCosts:
        with self._lock:
            if node_id not in self._counts:
                raise UnknownNode(f"node {node_id!r} not registered in ledger")
            c = self._counts[node_id]
            return NodeCosts(fresh=c.fresh, replay=c.replay, reused=c.reused)

    def node_ids(self) -> list[str]:
        with self._lock:
            return list(self._counts)

    def to_payload(self) -> dict:
        with self._lock:
            return {
                node_id: {"fresh": c.fresh, "replay": c.replay, "reused": c.reused}
                for node_id, c in self._counts.items()
            }

    @classmethod
    def from_payload(cls, payload: dict) -> "CostLedger":
        ledger = cls()
        for node_id, entry in payload.items():
            ledger._counts[node_id] = NodeCosts(
                fresh=int(entry.get("fresh", 0)),
                replay=int(entry.get("replay", 0)),
                reused=int(entry.get("reused", 0)),
            )
        return ledger


def record_step(ledger: CostLedger, node_id: str, kind: str, count: int = 1) -> CostLedger:
    ledger.record_step(node_id, kind, count)
    return ledger


def _check_counts(prefix_classes: int, suffix_classes: int) -> None:
    if prefix_classes < 1 or suffix_classes < 1:
        raise InvalidClassCount("class counts must be at least 1")


def theorem71_no_gain(prefix_classes: int, suffix_classes: int) -> bool:
    """Branching matches linear simulation exactly when both the prefix and
    suffix trajectory sets each collapse to a single equivalence class."""
    _check_counts(prefix_classes, suffix_classes)
    return prefix_classes == 1 and suffix_classes == 1


@dataclass(frozen=True)
class BranchAdvice:
    verdict: str
    prefix_classes: int
    suffix_classes: int


def theorem72_advice(prefix_classes: int, suffix_classes: int) -> BranchAdvice:
    """Branch-gain verdict from equivalence-class counts.

    Two or more suffix classes: branching shares the common prefix (case A).
    One suffix class but several prefix classes: the suffix can be stored
    once and only the distinct prefixes simulated (case B). One class on
    both sides: no gain.
    """
    _check_counts(prefix_classes, suffix_classes)
    if suffix_classes >= 2:
        verdict = CASE_A
    elif prefix_classes >= 2:
        verdict = CASE_B
    else:
        verdict = NO_GAIN
    return BranchAdvice(verdict=verdict, prefix_classes=prefix_classes, suffix_classes=suffix_classes)


@dataclass(frozen=True)
class NodeBreakdown:
    node_id: str
    fresh: int
    replay: int
    reused: int


@dataclass(frozen=True)
class SavingsReport:
    steps_linear: int
    steps_branching: int
    ratio: float
    nodes: tuple

    def to_payload(self) -> dict:
        return {
            "steps_linear": self.steps_linear,
            "steps_branching": self.steps_branching,
            "ratio": self.ratio,
            "nodes": [
                {"id": n.node_id, "fresh": n.fresh, "replay": n.replay, "reused": n.reused}
                for n in self.nodes
            ],
        }


def _trees_of(trees) -> list:
    if hasattr(trees, "trees"):  # Forest
        return list(trees.trees.values())
    if hasattr(trees, "nodes"):  # single tree
        return [trees]
    return list(trees)


def savings_report(trees, ledger: CostLedger) -> SavingsReport:
    """Compare branching cost against from-scratch linear simulation.

    Linear cost counts each terminal scenario as a full run from the root's
    start; branching cost sums fresh and replay work actually performed.
    """
    tree_list = _trees_of(trees)
    steps_linear = 0
    for tree in tree_list:
        for terminal in tree.terminal_scenarios():
            if terminal.status not in (STATUS_COMPLETE, STATUS_REUSED):
                raise TreeIncomplete(
                    f"terminal {terminal.node_id} is {terminal.status}; run the tree first"
                )
            steps_linear += terminal.end_step - tree.root.start_step
    if steps_linear == 0:
        raise TreeIncomplete("no simulated steps to report on")
    breakdown = []
    steps_branching = 0
    for tree in tree_list:
        for node in tree.nodes.values():
            costs = ledger.counts(node.node_id)
            steps_branching += costs.executed
            breakdown.append(
                NodeBreakdown(
                    node_id=node.node_id,
                    fresh=costs.fresh,
                    replay=costs.replay,
                    reused=costs.reused,
                )
            )
    return SavingsReport(
        steps_linear=steps_linear,
        steps_branching=steps_branching,
        ratio=steps_branching / steps_linear,
        nodes=tuple(breakdown),
    )
