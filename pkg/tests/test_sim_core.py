"""Simulator kernels: examples, determinism, and incremental == full."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchsim.errors import InvalidSeed, NumericFault, UnstableParams
from branchsim.sim_core import (
    FieldState,
    MaxcaParams,
    SimulatorSpec,
    VesselgridParams,
    canonical_bytes,
    changed_indices,
    init_state,
    nonzero_cell_indices,
    recompute_candidates,
    states_equal,
    step_full,
    step_incremental,
)


def vessel_spec(w=5, h=5, cell=1.0):
    return SimulatorSpec("vesselgrid", w, h, cell)


def maxca_spec(w=3, h=3):
    return SimulatorSpec("maxca", w, h)


def _maxca_reference(spec, cells):
    """Independent enumeration of the max rule, cell by cell."""
    out = cells.copy()
    for y in range(spec.height):
        for x in range(spec.width):
            i = y * spec.width + x
            best = cells[i]
            for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < spec.width and 0 <= ny < spec.height:
                    best = max(best, cells[ny * spec.width + nx])
            out[i] = best
    return out


class TestInitState:
    def test_empty_seed_gives_zero_field(self):
        state = init_state(vessel_spec(), {})
        assert state.step_index == 0
        assert not state.cells.any()

    def test_maxca_center_seed(self):
        state = init_state(maxca_spec(), {4: 255})
        assert state.cells[4] == 255
        assert state.cells.sum() == 255

    def test_maxca_value_out_of_range(self):
        with pytest.raises(InvalidSeed):
            init_state(maxca_spec(), {4: 300})

    def test_index_out_of_range(self):
        with pytest.raises(InvalidSeed):
            init_state(maxca_spec(), {9: 1})

    def test_vesselgrid_rejects_nan_seed(self):
        with pytest.raises(InvalidSeed):
            init_state(vessel_spec(), {0: float("nan")})


class TestStepFull:
    def test_zero_field_is_fixed_point(self):
        spec = vessel_spec()
        params = VesselgridParams(diffusion=0.1, dt=1.0)
        state = init_state(spec, {})
        out = step_full(spec, params, state)
        assert out.step_index == 1
        assert not out.cells.any()

    def test_diffusion_impulse_matches_hand_stencil(self):
        # 5-point stencil by hand: center loses 4*dt*D, each neighbor gains dt*D.
        spec = vessel_spec()
        params = VesselgridParams(diffusion=0.1, dt=1.0)
        center = spec.cell_index(2, 2)
        state = init_state(spec, {center: 1.0})
        out = step_full(spec, params, state)
        expected = np.zeros(25)
        expected[center] = 0.6
        for nb in (spec.cell_index(2, 1), spec.cell_index(2, 3),
                   spec.cell_index(1, 2), spec.cell_index(3, 2)):
            expected[nb] = 0.1
        assert np.array_equal(out.cells, expected)

    def test_maxca_plus_shape(self):
        spec = maxca_spec()
        state = init_state(spec, {4: 255})
        out = step_full(spec, MaxcaParams(), state)
        assert np.array_equal(out.cells, _maxca_reference(spec, state.cells))
        assert sorted(np.nonzero(out.cells)[0].tolist()) == [1, 3, 4, 5, 7]
        assert set(out.cells[[1, 3, 4, 5, 7]].tolist()) == {255}

    def test_unstable_diffusion_number_rejected(self):
        spec = vessel_spec()
        params = VesselgridParams(diffusion=0.3, dt=1.0)  # 0.3 > 0.25
        with pytest.raises(UnstableParams):
            step_full(spec, params, init_state(spec, {}))

    def test_unstable_cfl_rejected(self):
        spec = vessel_spec()
        params = VesselgridParams(vx=0.8, vy=0.4, dt=1.0)  # 1.2 > 1
        with pytest.raises(UnstableParams):
            step_full(spec, params, init_state(spec, {}))

    def test_nan_input_faults(self):
        spec = vessel_spec()
        cells = np.zeros(25)
        cells[3] = float("nan")
        with pytest.raises(NumericFault):
            step_full(spec, VesselgridParams(dt=0.1), FieldState(0, cells))

    def test_overflow_to_nan_faults(self):
        spec = vessel_spec(4, 4)
        cells = np.empty(16)
        cells[0::2] = 1.7e308
        cells[1::2] = -1.7e308
        params = VesselgridParams(diffusion=0.25, dt=1.0)
        state = FieldState(0, cells)
        with np.errstate(all="ignore"), pytest.raises(NumericFault):
            # inf appears first; the following step hits inf - inf.
            step_full(spec, params, step_full(spec, params, state))

    def test_determinism(self):
        spec = vessel_spec(8, 8)
        params = VesselgridParams(diffusion=0.2, vx=0.1, vy=-0.2, dt=0.5,
                                  source_cells=frozenset({10}), source_amp=1.0)
        state = init_state(spec, {20: 0.7, 33: -1.2})
        a = step_full(spec, params, state)
        b = step_full(spec, params, state)
        assert a.cells.tobytes() == b.cells.tobytes()

    def test_pulsatile_source_injects(self):
        spec = vessel_spec()
        src = spec.cell_index(2, 2)
        params = VesselgridParams(dt=1.0, source_cells=frozenset({src}),
                                  source_amp=2.0, source_period=8)
        out = step_full(spec, params, init_state(spec, {}))
        # s_0 = amp * (1 + sin 0) = amp, applied for one dt.
        assert out.cells[src] == 2.0

    def test_conservation_without_source_or_velocity(self):
        spec = vessel_spec(16, 16)
        params = VesselgridParams(diffusion=0.2, dt=1.0)
        rng = np.random.default_rng(7)
        state = FieldState(0, rng.uniform(-1, 1, 256))
        total = math.fsum(state.cells.tolist())
        for _ in range(30):
            state = step_full(spec, params, state)
            now = math.fsum(state.cells.tolist())
            assert abs(now - total) <= 1e-12 * max(1.0, abs(total))


class TestMaxcaProperties:
    def test_monotone_and_saturating(self):
        spec = SimulatorSpec("maxca", 6, 6)
        state = init_state(spec, {0: 9, 35: 200})
        for _ in range(12):
            nxt = step_full(spec, MaxcaParams(), state)
            assert (nxt.cells >= state.cells).all()
            state = nxt

    def test_single_seed_fills_grid_within_bound(self):
        n = 7
        spec = SimulatorSpec("maxca", n, n)
        state = init_state(spec, {0: 255})
        bound = 2 * (n - 1)
        for _ in range(bound):
            state = step_full(spec, MaxcaParams(), state)
        assert (state.cells == 255).all()
        # all-255 is a fixed point
        nxt = step_full(spec, MaxcaParams(), state)
        assert np.array_equal(nxt.cells, state.cells)


class TestStepIncremental:
    def test_stationary_empty_dirty_is_noop(self):
        spec = vessel_spec()
        params = VesselgridParams(diffusion=0.1, dt=1.0)
        state = init_state(spec, {})
        out, dirty = step_incremental(spec, params, state, frozenset())
        assert states_equal(spec, out, state)
        assert dirty == frozenset()

    def test_maxca_recomputes_only_stencil(self):
        spec = maxca_spec()
        state = init_state(spec, {4: 255})
        cand = recompute_candidates(spec, MaxcaParams(), state, {4})
        assert sorted(cand.tolist()) == [1, 3, 4, 5, 7]
        out, dirty = step_incremental(spec, MaxcaParams(), state, {4})
        assert dirty == {1, 3, 5, 7}  # center was already 255
        assert np.array_equal(out.cells, step_full(spec, MaxcaParams(), state).cells)

    def test_matches_full_on_vesselgrid_march(self):
        spec = vessel_spec(12, 10)
        src = spec.cell_index(6, 5)
        params = VesselgridParams(diffusion=0.15, vx=0.2, vy=-0.1, dt=0.8,
                                  source_cells=frozenset({src}), source_amp=0.5,
                                  source_period=6)
        full = init_state(spec, {spec.cell_index(2, 2): 1.5})
        inc = full
        dirty = frozenset(int(i) for i in nonzero_cell_indices(spec, inc.cells))
        for _ in range(25):
            full = step_full(spec, params, full)
            inc, dirty = step_incremental(spec, params, inc, dirty)
            assert inc.cells.tobytes() == full.cells.tobytes()
        # dirty must be exactly the changed set of the step that produced it
        prev = inc
        full2 = step_full(spec, params, prev)
        inc2, dirty2 = step_incremental(spec, params, prev, dirty)
        assert dirty2 == set(int(i) for i in changed_indices(spec, prev.cells, inc2.cells))
        assert inc2.cells.tobytes() == full2.cells.tobytes()


@st.composite
def _maxca_case(draw):
    w = draw(st.integers(2, 6))
    h = draw(st.integers(2, 6))
    n = w * h
    seeds = draw(st.dictionaries(st.integers(0, n - 1), st.integers(0, 255), max_size=6))
    steps = draw(st.integers(1, 4))
    return SimulatorSpec("maxca", w, h), seeds, steps


@st.composite
def _vessel_case(draw):
    w = draw(st.integers(2, 6))
    h = draw(st.integers(2, 6))
    n = w * h
    seeds = draw(
        st.dictionaries(
            st.integers(0, n - 1),
            st.floats(-10, 10, allow_nan=False, allow_infinity=False),
            max_size=6,
        )
    )
    params = VesselgridParams(
        diffusion=draw(st.floats(0, 0.24)),
        vx=draw(st.floats(-0.4, 0.4)),
        vy=draw(st.floats(-0.4, 0.4)),
        dt=1.0,
        source_cells=frozenset(draw(st.sets(st.integers(0, n - 1), max_size=3))),
        source_amp=draw(st.floats(0, 2)),
        source_period=draw(st.integers(1, 9)),
    )
    steps = draw(st.integers(1, 4))
    return SimulatorSpec("vesselgrid", w, h), seeds, params, steps


class TestIncrementalProperty:
    @given(_maxca_case())
    @settings(max_examples=60, deadline=None)
    def test_maxca_incremental_equals_full(self, case):
        spec, seeds, steps = case
        state = init_state(spec, seeds)
        dirty = frozenset(int(i) for i in nonzero_cell_indices(spec, state.cells))
        full = state
        for _ in range(steps):
            full = step_full(spec, MaxcaParams(), full)
            state, dirty = step_incremental(spec, MaxcaParams(), state, dirty)
            assert state.cells.tobytes() == full.cells.tobytes()

    @given(_vessel_case())
    @settings(max_examples=60, deadline=None)
    def test_vesselgrid_incremental_equals_full(self, case):
        spec, seeds, params, steps = case
        state = init_state(spec, seeds)
        dirty = frozenset(int(i) for i in nonzero_cell_indices(spec, state.cells))
        full = state
        for _ in range(steps):
            full = step_full(spec, params, full)
            prev = state
            state, dirty = step_incremental(spec, params, prev, dirty)
            assert state.cells.tobytes() == full.cells.tobytes()
            assert dirty == set(int(i) for i in changed_indices(spec, prev.cells, state.cells))


class TestCanonicalBytes:
    def test_equal_states_equal_bytes(self):
        spec = vessel_spec()
        a = init_state(spec, {3: 0.5})
        b = init_state(spec, {3: 0.5})
        assert canonical_bytes(spec, a) == canonical_bytes(spec, b)

    def test_vesselgrid_length(self):
        spec = vessel_spec()
        assert len(canonical_bytes(spec, init_state(spec, {}))) == 200  # 8 * 25

    def test_maxca_length(self):
        spec = maxca_spec()
        assert len(canonical_bytes(spec, init_state(spec, {}))) == 9

    def test_negative_zero_distinct(self):
        spec = vessel_spec()
        plus = init_state(spec, {0: 0.0})
        minus = init_state(spec, {0: -0.0})
        assert canonical_bytes(spec, plus) != canonical_bytes(spec, minus)

    def test_negative_zero_counts_as_nonzero_bits(self):
        spec = vessel_spec()
        state = init_state(spec, {0: -0.0})
        assert nonzero_cell_indices(spec, state.cells).tolist() == [0]
