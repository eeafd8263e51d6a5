"""Observation projections and trajectory equivalence classes."""

import pytest

from branchsim.equivalence import (
    FULL_STATE,
    REGION_OF_INTEREST,
    ObservationSpec,
    observe,
    partition_classes,
    trajectory_digest,
)
from branchsim.errors import InvalidObservation, StepNotStored
from branchsim.scenario_tree import Forest
from branchsim.sim_core import (
    SimulatorSpec,
    VesselgridParams,
    canonical_bytes,
    init_state,
    step_full,
)
from branchsim.snapshot_store import create_store

SPEC = SimulatorSpec("vesselgrid", 16, 16)
BASE = VesselgridParams(diffusion=0.2, dt=1.0)


def grown_forest(store, configs):
    """One tree per config, each simulated `steps` forward."""
    forest = Forest(SPEC)
    for seeds, params, steps in configs:
        state = init_state(SPEC, seeds)
        tree = forest.create_tree(SPEC, params, state)
        store.create_segment(tree.root_id, 0, state)
        for _ in range(steps):
            nxt = step_full(SPEC, params, state)
            store.append_step(tree.root_id, state, nxt)
            state = nxt
        tree.root.end_step = steps
        tree.root.status = "complete"
    return forest


class TestObserve:
    def test_full_state_is_canonical_bytes(self):
        state = init_state(SPEC, {5: 1.5, 100: -0.25})
        obs = ObservationSpec(mode=FULL_STATE)
        assert observe(SPEC, state, obs) == canonical_bytes(SPEC, state)

    def test_roi_byte_count(self):
        state = init_state(SPEC, {})
        obs = ObservationSpec(mode=REGION_OF_INTEREST, roi=(3, 3, 2, 2))
        assert len(observe(SPEC, state, obs)) == 32  # 8 * 4 cells

    def test_roi_values_row_major(self):
        state = init_state(SPEC, {SPEC.cell_index(4, 3): 7.0})
        obs = ObservationSpec(mode=REGION_OF_INTEREST, roi=(3, 3, 2, 2))
        import numpy as np

        got = np.frombuffer(observe(SPEC, state, obs), dtype="<f8")
        assert got.tolist() == [0.0, 7.0, 0.0, 0.0]

    def test_roi_out_of_bounds(self):
        state = init_state(SPEC, {})
        obs = ObservationSpec(mode=REGION_OF_INTEREST, roi=(10, 10, 8, 8))
        with pytest.raises(InvalidObservation):
            observe(SPEC, state, obs)

    def test_roi_required(self):
        with pytest.raises(InvalidObservation):
            ObservationSpec(mode=REGION_OF_INTEREST)


class TestTrajectoryDigest:
    def test_deterministic(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({10: 1.0}, BASE, 6)])
        a = trajectory_digest(store, forest, "r0", (0, 6))
        b = trajectory_digest(store, forest, "r0", (0, 6))
        assert a.combined.value == b.combined.value
        assert len(a.per_step_digests) == 7

    def test_point_interval(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({10: 1.0}, BASE, 3)])
        td = trajectory_digest(store, forest, "r0", (2, 2))
        assert len(td.per_step_digests) == 1
        assert td.combined.value != td.per_step_digests[0].value  # combined re-hashes

    def test_identical_runs_share_digest(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({10: 1.0}, BASE, 8), ({10: 1.0}, BASE, 8)])
        a = trajectory_digest(store, forest, "r0", (0, 8))
        b = trajectory_digest(store, forest, "r1", (0, 8))
        assert a.combined.value == b.combined.value

    def test_uncovered_interval(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({10: 1.0}, BASE, 4)])
        with pytest.raises(StepNotStored):
            trajectory_digest(store, forest, "r0", (0, 9))


class TestPartitionClasses:
    def test_duplicate_runs_one_class(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({10: 1.0}, BASE, 8), ({10: 1.0}, BASE, 8)])
        classes = partition_classes(store, forest, ["r0", "r1"], (0, 8))
        assert len(classes) == 1
        assert classes[0].members == ("r0", "r1")

    def test_distinct_diffusion_two_classes(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        other = VesselgridParams(diffusion=0.1, dt=1.0)
        forest = grown_forest(store, [({10: 1.0}, BASE, 8), ({10: 1.0}, other, 8)])
        classes = partition_classes(store, forest, ["r0", "r1"], (0, 8))
        assert len(classes) == 2

    def test_roi_shields_distant_change(self, tmp_path):
        # The stencil spreads influence one cell per step, so a corner source
        # cannot reach the opposite-corner ROI within the interval.
        store = create_store(tmp_path / "s", SPEC)
        far = SPEC.cell_index(15, 15)
        pulsed = VesselgridParams(
            diffusion=0.2, dt=1.0,
            source_cells=frozenset({far}), source_amp=2.0, source_period=4,
        )
        steps = 10  # manhattan distance from (15,15) to the roi edge is 20
        forest = grown_forest(store, [({0: 1.0}, BASE, steps), ({0: 1.0}, pulsed, steps)])
        roi_obs = ObservationSpec(mode=REGION_OF_INTEREST, roi=(0, 0, 4, 4))
        shielded = partition_classes(store, forest, ["r0", "r1"], (0, steps), roi_obs)
        assert len(shielded) == 1
        full = partition_classes(store, forest, ["r0", "r1"], (0, steps))
        assert len(full) == 2

    def test_partition_covers_every_node_once(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        configs = [({i: 1.0}, BASE, 5) for i in range(4)]
        forest = grown_forest(store, configs)
        ids = [f"r{i}" for i in range(4)]
        classes = partition_classes(store, forest, ids, (0, 5))
        seen = [m for c in classes for m in c.members]
        assert sorted(seen) == sorted(ids)

    def test_full_equivalence_implies_roi_equivalence(self, tmp_path):
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(store, [({3: 2.0}, BASE, 6), ({3: 2.0}, BASE, 6)])
        full = partition_classes(store, forest, ["r0", "r1"], (0, 6))
        assert len(full) == 1
        for roi in ((0, 0, 3, 3), (5, 5, 6, 6), (0, 10, 16, 6)):
            obs = ObservationSpec(mode=REGION_OF_INTEREST, roi=roi)
            assert len(partition_classes(store, forest, ["r0", "r1"], (0, 6), obs)) == 1

    def test_equivalence_relation_properties(self, tmp_path):
        # reflexive / symmetric / transitive on combined digests
        store = create_store(tmp_path / "s", SPEC)
        forest = grown_forest(
            store,
            [({1: 1.0}, BASE, 5), ({1: 1.0}, BASE, 5), ({1: 1.0}, BASE, 5), ({2: 1.0}, BASE, 5)],
        )
        digests = {
            rid: trajectory_digest(store, forest, rid, (0, 5)).combined.value
            for rid in ("r0", "r1", "r2", "r3")
        }
        equiv = lambda a, b: digests[a] == digests[b]
        for rid in digests:
            assert equiv(rid, rid)
        assert equiv("r0", "r1") and equiv("r1", "r0")
        assert equiv("r0", "r1") and equiv("r1", "r2") and equiv("r0", "r2")
        assert not equiv("r0", "r3")
