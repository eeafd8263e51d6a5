"""Report assembly shared by the CLI and the HTTP service."""

from __future__ import annotations

from .branch_engine import Engine
from .cost_model import savings_report, theorem72_advice
from .equivalence import ObservationSpec, partition_classes
from .errors import BranchSimError


def build_report(engine: Engine, observation: ObservationSpec = ObservationSpec()) -> dict:
    """Savings plus an equivalence-class summary over the stored forest.

    Prefix classes partition the roots over [0, t_I] and suffix classes the
    terminal scenarios over [t_I, t_f], where t_I is the last branch step and
    t_f the shortest terminal horizon; the advice verdict follows from those
    counts. Sections that cannot be computed are null rather than errors.
    """
    forest = engine.forest
    report: dict = {"savings": None, "equivalence": None, "advice": None}
    try:
        report["savings"] = savings_report(forest, engine.ledger).to_payload()
    except BranchSimError as exc:
        report["savings_error"] = str(exc)
        return report

    terminals = [t for tree in forest.trees.values() for t in tree.terminal_scenarios()]
    branch_steps = [
        n.branch_point.branch_step for n in forest.all_nodes() if n.branch_point is not None
    ]
    t_split = max(branch_steps) if branch_steps else 0
    t_end = min(t.end_step for t in terminals)
    if t_end < t_split:
        return report

    try:
        suffix = partition_classes(
            engine.store, forest, [t.node_id for t in terminals], (t_split, t_end), observation
        )
        roots = [tree.root_id for tree in forest.trees.values()]
        prefix = partition_classes(engine.store, forest, roots, (0, t_split), observation)
    except BranchSimError:
        return report

    report["equivalence"] = {
        "interval": [t_split, t_end],
        "observation": {"mode": observation.mode, "roi": list(observation.roi) if observation.roi else None},
        "classes": [
            {"digest": c.representative_digest.hex, "members": list(c.members)}
            for c in suffix
        ],
    }
    advice = theorem72_advice(len(prefix), len(suffix))
    report["advice"] = {
        "verdict": advice.verdict,
        "prefix_classes": advice.prefix_classes,
        "suffix_classes": advice.suffix_classes,
    }
    return report


def observation_from_config(config: dict) -> ObservationSpec:
    payload = config.get("observation")
    if not payload:
        return ObservationSpec()
    roi = payload.get("roi")
    return ObservationSpec(mode=payload.get("mode", "full_state"), roi=tuple(roi) if roi else None)


def render_table(report: dict) -> str:
    """Fixed-width text rendering of a report for terminal output."""
    lines = []
    savings = report.get("savings")
    if savings:
        lines.append(
            f"steps_linear={savings['steps_linear']}  "
            f"steps_branching={savings['steps_branching']}  "
            f"ratio={savings['ratio']:.4f}"
        )
        lines.append(f"{'node':<14}{'fresh':>8}{'replay':>8}{'reused':>8}")
        for node in savings["nodes"]:
            lines.append(
                f"{node['id']:<14}{node['fresh']:>8}{node['replay']:>8}{node['reused']:>8}"
            )
    advice = report.get("advice")
    if advice:
        lines.append(
            f"advice: {advice['verdict']} "
            f"(prefix classes {advice['prefix_classes']}, suffix classes {advice['suffix_classes']})"
        )
    equivalence = report.get("equivalence")
    if equivalence:
        lines.append(f"equivalence classes over {equivalence['interval']}:")
        for cls in equivalence["classes"]:
            lines.append(f"  {cls['digest'][:12]}...  {', '.join(cls['members'])}")
    return "\n".join(lines)
