"""Deviation-aware hybrid search: costs, pruning, retiming and chaining."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from furrowplan.geometry import Polygon, Polyline
from furrowplan.planner import (
    PlanNotFound,
    PlannerConfig,
    deviation_along,
    e_cost_increment,
    e_pred,
    plan,
    plan_reference,
    split_long_reference,
)
from furrowplan.vehicle import VehicleParams


def _point_lists():
    return st.lists(
        st.tuples(st.floats(-20, 20, allow_nan=False), st.floats(-20, 20, allow_nan=False)),
        min_size=2,
        max_size=15,
    )


class TestDeviationCost:
    def test_on_reference_is_free(self):
        R = Polyline([[0, 0], [10, 0]])
        pts = np.column_stack([np.linspace(0, 10, 11), np.zeros(11)])
        assert deviation_along(pts, R) == 0.0

    def test_offset_line(self):
        R = Polyline([[0, 0], [10, 0]])
        pts = np.array([[0.0, 2.0], [10.0, 2.0]])
        # One step of length 10 at constant distance 2.
        assert deviation_along(pts, R) == pytest.approx(20.0)

    @given(_point_lists())
    @settings(max_examples=100)
    def test_recursion_matches_direct_sum(self, raw):
        R = Polyline([[0, 0], [10, 0], [10, 10]])
        pts = np.asarray(raw, dtype=float)
        acc = 0.0
        for prev, new in zip(pts, pts[1:]):
            acc = e_cost_increment(acc, prev, new, R)
        assert acc == pytest.approx(deviation_along(pts, R), abs=1e-9)

    def test_e_pred_zero_at_goal(self):
        R = Polyline([[0, 0], [10, 0]])
        goal = [10.0, 0.0, 0.0]
        assert e_pred(goal, R, goal, 5.0, 0.25) == 0.0

    def test_e_pred_positive_off_reference(self):
        R = Polyline([[0, 0], [30, 0]])
        value = e_pred([0.0, 6.0, 0.0], R, [30.0, 0.0, 0.0], 5.0, 0.25)
        assert value > 0.0


class TestSplitReference:
    def test_short_reference_untouched(self):
        R = Polyline([[0, 0], [10, 0]])
        assert split_long_reference(R, 60.0) == [R]

    def test_pieces_cover_and_bound(self):
        R = Polyline([[0, 0], [50, 0], [50, 40], [0, 40], [0, 80]])
        pieces = split_long_reference(R, 60.0)
        assert sum(p.total_length for p in pieces) == pytest.approx(R.total_length)
        assert all(p.total_length <= 60.0 + 1e-9 for p in pieces)
        for prev, nxt in zip(pieces, pieces[1:]):
            assert np.allclose(prev.points[-1], nxt.points[0])

    def test_single_long_segment_cut(self):
        R = Polyline([[0, 0], [150, 0]])
        pieces = split_long_reference(R, 60.0)
        assert len(pieces) == 3
        assert pieces[0].points[-1][0] == pytest.approx(60.0)

    def test_invalid_max_len(self):
        with pytest.raises(ValueError):
            split_long_reference(Polyline([[0, 0], [1, 0]]), 0.0)


def _check_kinematics(traj, params, config):
    assert np.all(np.abs(traj.curvatures) <= params.max_curvature + 1e-9)
    dv = np.abs(np.diff(traj.states[:, 3]))
    assert np.all(dv <= params.max_accel * config.dt + 1e-9)
    cusp = np.where(traj.gears[:-1] != traj.gears[1:])[0]
    assert np.all(np.abs(traj.states[cusp + 1, 3]) <= 1e-9)


class TestPlan:
    def test_straight_reference(self, params, square_field, straight_reference):
        config = PlannerConfig()
        traj = plan(straight_reference, square_field, [], params, config)
        assert np.allclose(traj.states[0, :3], [10, 20, 0], atol=1e-9)
        assert np.allclose(traj.states[-1, :2], [50, 20], atol=1e-6)
        # v_n is the average speed over the leaving interval, so a start
        # from rest shows at most half an acceleration step.
        assert 0.0 <= traj.states[0, 3] <= params.max_accel * config.dt / 2 + 1e-9
        assert traj.states[-1, 3] == pytest.approx(0.0, abs=1e-9)
        _check_kinematics(traj, params, config)

    def test_corner_reference_respects_curvature(
        self, params, square_field, corner_reference
    ):
        config = PlannerConfig()
        traj = plan(corner_reference, square_field, [], params, config)
        _check_kinematics(traj, params, config)
        assert np.allclose(traj.states[-1, :2], [45, 30], atol=1e-6)
        # The raw corner is a curvature spike; the plan must round it.
        R = corner_reference
        dev = deviation_along(traj.positions, R)
        assert dev > 0.0

    def test_obstacle_forces_detour(self, params, square_field, straight_reference):
        block = Polygon([[28, 17], [32, 17], [32, 23], [28, 23]])
        config = PlannerConfig()
        traj = plan(straight_reference, square_field, [block], params, config)
        clear = plan(straight_reference, square_field, [], params, config)
        dev_block = deviation_along(traj.positions, straight_reference)
        dev_clear = deviation_along(clear.positions, straight_reference)
        assert dev_block > dev_clear

    def test_pruning_preserves_feasibility(self, params, square_field):
        R = Polyline([[10, 10], [50, 10], [50, 30], [10, 30]])
        pruned = plan(R, square_field, [], params, PlannerConfig(enable_pruning=True))
        full = plan(R, square_field, [], params, PlannerConfig(enable_pruning=False))
        for traj in (pruned, full):
            assert np.allclose(traj.states[-1, :2], [10, 30], atol=1e-6)
        # Pruning may only discard dominated nodes, not the optimum basin:
        # both solutions should deviate comparably from the reference.
        dev_p = deviation_along(pruned.positions, R)
        dev_f = deviation_along(full.positions, R)
        assert dev_p <= dev_f * 1.5 + 1.0

    def test_start_inside_obstacle_rejected(self, params, square_field, straight_reference):
        on_start = Polygon([[9, 19], [13, 19], [13, 21], [9, 21]])
        with pytest.raises(ValueError):
            plan(straight_reference, square_field, [on_start], params, PlannerConfig())

    def test_unreachable_raises_plan_not_found(self, params, square_field, straight_reference):
        # A wall spanning the full field height with no way around.
        wall = Polygon([[28, 0.01], [32, 0.01], [32, 39.99], [28, 39.99]])
        with pytest.raises(PlanNotFound):
            plan(
                straight_reference,
                square_field,
                [wall],
                params,
                PlannerConfig(max_expansions=3000),
            )


class TestPlanReference:
    def test_long_reference_chains(self, params):
        field = Polygon([[0, 0], [200, 0], [200, 40], [0, 40]])
        R = Polyline([[10, 20], [190, 20]])
        config = PlannerConfig()
        traj = plan_reference(R, field, [], params, config)
        assert np.allclose(traj.states[-1, :2], [190, 20], atol=1e-6)
        _check_kinematics(traj, params, config)
        # Chained pieces must not force a stop at every junction when the
        # heading is continuous; the vehicle should keep rolling mid-field.
        mid = traj.states[traj.num_states // 2, 3]
        assert mid > 0.5
