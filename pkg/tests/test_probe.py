"""Point sampling, frame extraction, and delta playback."""

import numpy as np
import pytest

from branchsim.branch_engine import Engine, RunRequest
from branchsim.errors import InvalidProbe, InvalidRange, StepNotStored
from branchsim.probe import (
    Frame,
    ProbeQuery,
    apply_frame_delta,
    extract_frame,
    frame_deltas,
    sample_point,
)
from branchsim.sim_core import SimulatorSpec, VesselgridParams

SPEC = SimulatorSpec("vesselgrid", 12, 12)
PARAMS = VesselgridParams(
    diffusion=0.2, vx=0.1, vy=0.05, dt=0.5,
    source_cells=frozenset({SPEC.cell_index(6, 6)}), source_amp=1.0, source_period=8,
)


@pytest.fixture
def engine(tmp_path):
    eng = Engine.create(tmp_path / "s", SPEC, checkpoint_interval=5)
    tree = eng.new_tree(PARAMS, {SPEC.cell_index(3, 3): 2.0})
    eng.run(RunRequest(tree.root_id, 30))
    child = eng.branch(tree.root_id, 20, {"source_amp": 2.0})
    eng.run(RunRequest(child.node_id, 30))
    return eng, tree.root_id, child.node_id


class TestSamplePoint:
    def test_uniform_field_returns_constant(self, tmp_path):
        eng = Engine.create(tmp_path / "u", SPEC)
        seeds = {i: 3.25 for i in range(SPEC.n_cells)}
        tree = eng.new_tree(VesselgridParams(dt=0.5), seeds)
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.uniform(0, SPEC.width - 1)
            y = rng.uniform(0, SPEC.height - 1)
            value = sample_point(eng.store, eng.forest, ProbeQuery(tree.root_id, x, y, 0))
            assert value == 3.25

    def test_integer_coordinates_exact(self, engine):
        eng, root, _ = engine
        state = eng.store.get_state_at(root, 17)
        for x, y in ((0, 0), (3, 3), (11, 11), (6, 2)):
            got = sample_point(eng.store, eng.forest, ProbeQuery(root, float(x), float(y), 17))
            assert got == state.cells[SPEC.cell_index(x, y)]

    def test_row_midpoint_averages(self, tmp_path):
        eng = Engine.create(tmp_path / "m", SPEC)
        tree = eng.new_tree(
            VesselgridParams(dt=0.5),
            {SPEC.cell_index(4, 5): 1.0, SPEC.cell_index(5, 5): 3.0},
        )
        got = sample_point(eng.store, eng.forest, ProbeQuery(tree.root_id, 4.5, 5.0, 0))
        assert got == (1.0 + 3.0) / 2

    def test_within_surrounding_bounds(self, engine):
        eng, root, _ = engine
        rng = np.random.default_rng(11)
        state_cache = {}
        for _ in range(300):
            step = int(rng.integers(0, 31))
            x = float(rng.uniform(0, SPEC.width - 1))
            y = float(rng.uniform(0, SPEC.height - 1))
            value = sample_point(eng.store, eng.forest, ProbeQuery(root, x, y, step))
            if step not in state_cache:
                state_cache[step] = eng.store.get_state_at(root, step).cells
            cells = state_cache[step]
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            x1, y1 = min(x0 + 1, SPEC.width - 1), min(y0 + 1, SPEC.height - 1)
            corners = [cells[yy * SPEC.width + xx] for yy in (y0, y1) for xx in (x0, x1)]
            assert min(corners) <= value <= max(corners)

    def test_out_of_bounds(self, engine):
        eng, root, _ = engine
        with pytest.raises(InvalidProbe):
            sample_point(eng.store, eng.forest, ProbeQuery(root, 11.5, 3.0, 5))

    def test_unstored_step(self, engine):
        eng, root, _ = engine
        with pytest.raises(StepNotStored):
            sample_point(eng.store, eng.forest, ProbeQuery(root, 1.0, 1.0, 99))


class TestExtractFrame:
    def test_snapshot_step(self, engine):
        eng, root, _ = engine
        frame = extract_frame(eng.store, eng.forest, root, 10)
        assert frame.cells.tobytes() == eng.store.get_state_at(root, 10).cells.tobytes()

    def test_child_resolves_parent_steps(self, engine):
        eng, root, child = engine
        for step in (0, 7, 20):
            via_child = extract_frame(eng.store, eng.forest, child, step)
            via_parent = extract_frame(eng.store, eng.forest, root, step)
            assert via_child.cells.tobytes() == via_parent.cells.tobytes()

    def test_unstored(self, engine):
        eng, _, child = engine
        with pytest.raises(StepNotStored):
            extract_frame(eng.store, eng.forest, child, 31)


class TestFrameDeltas:
    def test_identical_frames_empty_delta(self, tmp_path):
        eng = Engine.create(tmp_path / "q", SPEC)
        tree = eng.new_tree(VesselgridParams(dt=0.5), {})  # quiescent
        eng.run(RunRequest(tree.root_id, 3))
        deltas = frame_deltas(eng.store, eng.forest, tree.root_id, 0, 3)
        assert all(d.indices.size == 0 for d in deltas)

    def test_fold_reproduces_frames(self, engine):
        eng, _, child = engine
        # window crosses the branch point, exercising lineage resolution
        frame = extract_frame(eng.store, eng.forest, child, 12)
        for delta in frame_deltas(eng.store, eng.forest, child, 12, 30):
            frame = apply_frame_delta(SPEC, frame, delta)
            oracle = extract_frame(eng.store, eng.forest, child, frame.step)
            assert frame.cells.tobytes() == oracle.cells.tobytes()

    def test_entries_strictly_ascending(self, engine):
        eng, root, _ = engine
        for delta in frame_deltas(eng.store, eng.forest, root, 0, 10):
            idx = delta.indices
            assert (np.diff(idx) > 0).all() if idx.size > 1 else True

    def test_inverted_range(self, engine):
        eng, root, _ = engine
        with pytest.raises(InvalidRange):
            frame_deltas(eng.store, eng.forest, root, 9, 4)
