"""Step resolution across branch lineage and donor links.

A node owns the steps in its own window; steps before its branch point
belong to an ancestor, and steps past a suffix link are read from the donor
segment (re-stamping the step index, which is excluded from canonical bytes
and digests). The container argument is any object with a ``node(node_id)``
method: a `ScenarioTree` or a `Forest`.
"""

from __future__ import annotations

from .errors import StepNotStored
from .sim_core import FieldState


def owning_node(container, node_id: str, step: int):
    """Walk up parent links until the node whose window contains `step`."""
    node = container.node(node_id)
    while step < node.start_step:
        if node.parent_id is None:
            raise StepNotStored(f"step {step} precedes the root window of {node_id}")
        node = container.node(node.parent_id)
    if step > node.end_step:
        raise StepNotStored(
            f"step {step} beyond simulated end {node.end_step} of {node.node_id}"
        )
    return node


def resolve(store, container, node_id: str, step: int) -> tuple[FieldState, int]:
    """State at `step` along the node's lineage, plus delta applications used."""
    node = owning_node(container, node_id, step)
    link = node.suffix_link
    if link is not None and step > link.from_step:
        donor_step = link.donor_from_step + (step - link.from_step)
        state, cost = resolve(store, container, link.donor_id, donor_step)
        if state.step_index != step:
            state = FieldState(step_index=step, cells=state.cells)
        return state, cost
    return store.reconstruct(node.node_id, step)


def resolve_state(store, container, node_id: str, step: int) -> FieldState:
    state, _ = resolve(store, container, node_id, step)
    return state
