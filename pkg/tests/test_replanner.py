"""Online obstacle detection, windowed replanning and trajectory splicing."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from furrowplan.geometry import (
    FootprintChecker,
    Polygon,
    SensorFan,
    footprint_corners_batch,
)
from furrowplan.planner import PlanNotFound, PlannerConfig, plan
from furrowplan.replanner import (
    DetectionState,
    ReplannerConfig,
    collision_window,
    replan,
    sense_and_replan,
    splice,
    update_detection,
)
from furrowplan.trajectory import Trajectory
from furrowplan.vehicle import FORWARD, VehicleParams, footprint_corners


def _straight_traj(n=40, v=2.0, dt=0.5, y=20.0, x0=5.0):
    xs = x0 + np.arange(n) * v * dt
    states = np.column_stack([xs, np.full(n, y), np.zeros(n), np.full(n, v)])
    return Trajectory(states, np.zeros(n), np.full(n, FORWARD), dt)


FAN = SensorFan(15.0, math.pi / 2)


class TestDetection:
    def test_obstacle_enters_known_when_fully_seen(self):
        obs = Polygon([[12, 19], [14, 19], [14, 21], [12, 21]])
        state = DetectionState.fresh([obs])
        state = update_detection(state, [0.0, 20.0, 0.0], FAN)
        assert len(state.known) == 1
        assert not state.undetected

    def test_partial_sighting_accumulates(self):
        # Two vertices inside a narrow fan, then the other two later.
        obs = Polygon([[10, 18], [12, 18], [12, 26], [10, 26]])
        narrow = SensorFan(15.0, 0.6)
        state = DetectionState.fresh([obs])
        state = update_detection(state, [0.0, 18.0, 0.0], narrow)
        assert not state.known
        assert any(state.seen_masks[0])
        state = update_detection(state, [0.0, 25.0, 0.0], narrow)
        assert len(state.known) == 1

    def test_known_set_never_shrinks(self):
        obs = Polygon([[12, 19], [14, 19], [14, 21], [12, 21]])
        state = DetectionState.fresh([obs])
        state = update_detection(state, [0.0, 20.0, 0.0], FAN)
        # Facing away afterwards must not lose the detection.
        after = update_detection(state, [0.0, 20.0, math.pi], FAN)
        assert len(after.known) == 1

    def test_out_of_range_stays_hidden(self):
        obs = Polygon([[40, 19], [42, 19], [42, 21], [40, 21]])
        state = DetectionState.fresh([obs])
        state = update_detection(state, [0.0, 20.0, 0.0], FAN)
        assert not state.known
        assert not any(state.seen_masks[0])


class TestCollisionWindow:
    def test_no_obstacles_no_window(self, params):
        assert collision_window(_straight_traj(), [], params) is None

    def test_window_brackets_collision(self, params):
        traj = _straight_traj()
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        win = collision_window(traj, [obs], params, expand=5)
        assert win is not None
        assert win.first_bad <= win.last_bad
        assert win.start_index <= win.first_bad - 1
        assert win.end_index >= win.last_bad + 1
        # Widened endpoints are themselves collision-free.
        for idx in (win.start_index, win.end_index):
            corners = footprint_corners(traj.states[idx, :3], params)
            checker = FootprintChecker(
                Polygon([[-100, -100], [200, -100], [200, 200], [-100, 200]]), [obs]
            )
            assert checker.corners_valid(corners[None])

    def test_expand_arithmetic(self, params):
        traj = _straight_traj()
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        win3 = collision_window(traj, [obs], params, expand=3)
        win7 = collision_window(traj, [obs], params, expand=7)
        assert win3.start_index >= win7.start_index
        assert win3.end_index <= win7.end_index
        assert win7.start_index == max(win7.first_bad - 7, 0)

    def test_from_index_excludes_passed_states(self, params):
        traj = _straight_traj()
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        win = collision_window(traj, [obs], params, expand=5, from_index=0)
        later = collision_window(
            traj, [obs], params, expand=5, from_index=win.last_bad + 1
        )
        assert later is None

    def test_entry_speed_recorded(self, params):
        traj = _straight_traj()
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        win = collision_window(traj, [obs], params, expand=5)
        assert win.entry_speed == pytest.approx(2.0)
        assert win.start_gear == FORWARD


class TestReplan:
    def _window(self, params, obs, field):
        traj = _straight_traj()
        return traj, collision_window(traj, [obs], params, expand=5)

    def test_patch_avoids_obstacle(self, params, square_field):
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        traj, win = self._window(params, obs, square_field)
        patch = replan(win, square_field, [obs], params, PlannerConfig(beta=0.03))
        w = params.half_width
        local = np.array(
            [
                [params.front_length, -w],
                [params.front_length, w],
                [-params.rear_overhang, w],
                [-params.rear_overhang, -w],
            ]
        )
        checker = FootprintChecker(square_field, [obs])
        assert checker.corners_valid(footprint_corners_batch(patch.poses, local))
        assert np.allclose(patch.states[0, :2], win.start_state[:2], atol=1e-6)
        assert np.allclose(patch.states[-1, :2], win.end_state[:2], atol=1e-6)

    def test_patch_entry_speed_matches(self, params, square_field):
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        traj, win = self._window(params, obs, square_field)
        patch = replan(win, square_field, [obs], params, PlannerConfig(beta=0.03))
        # When the patch leaves in the same direction the vehicle arrives,
        # its first interval must not demand an infeasible speed jump. A
        # patch that opens with a gear change implies a stop first, so the
        # ramp then starts from rest instead.
        if patch.gears[0] * win.entry_speed > 0.0:
            dv = abs(patch.states[0, 3] - win.entry_speed)
        else:
            dv = abs(patch.states[0, 3])
        assert dv <= params.max_accel * patch.dt + 1e-9

    def test_blocked_window_raises(self, params):
        # A corridor barely wider than the vehicle with a plug in it.
        field = Polygon([[0, 18], [60, 18], [60, 22.4], [0, 22.4]])
        traj = _straight_traj(y=20.2)
        plug = Polygon([[20, 18.01], [23, 18.01], [23, 22.39], [20, 22.39]])
        win = collision_window(traj, [plug], params, expand=5)
        with pytest.raises(PlanNotFound):
            replan(
                win,
                field,
                [plug],
                params,
                PlannerConfig(beta=0.03, max_expansions=2000),
            )


class TestSplice:
    def _spliced(self, params, square_field):
        traj = _straight_traj()
        obs = Polygon([[20, 19], [23, 19], [23, 21], [20, 21]])
        win = collision_window(traj, [obs], params, expand=5)
        patch = replan(win, square_field, [obs], params, PlannerConfig(beta=0.03))
        return traj, win, patch, splice(traj, win, patch)

    def test_outside_window_bit_exact(self, params, square_field):
        traj, win, patch, out = self._spliced(params, square_field)
        i0, i1 = win.start_index, win.end_index
        np.testing.assert_array_equal(out.states[:i0], traj.states[:i0])
        tail_len = traj.num_states - (i1 + 1)
        np.testing.assert_array_equal(out.states[-tail_len:], traj.states[i1 + 1 :])
        np.testing.assert_array_equal(out.gears[:i0], traj.gears[:i0])

    def test_rejoin_keeps_outgoing_motion(self, params, square_field):
        traj, win, patch, out = self._spliced(params, square_field)
        j = win.start_index + patch.num_states - 1  # rejoin index in output
        np.testing.assert_array_equal(out.states[j], traj.states[win.end_index])
        assert out.curvatures[j] == traj.curvatures[win.end_index]
        assert out.gears[j] == traj.gears[win.end_index]

    def test_mismatched_patch_rejected(self, params, square_field):
        traj, win, patch, _ = self._spliced(params, square_field)
        bad = Trajectory(
            patch.states + np.array([0.5, 0, 0, 0]),
            patch.curvatures,
            patch.gears,
            patch.dt,
        )
        with pytest.raises(ValueError):
            splice(traj, win, bad)


class TestSenseAndReplan:
    def test_full_cycle(self, params, square_field):
        traj = _straight_traj()
        obs = Polygon([[25, 19], [28, 19], [28, 21], [25, 21]])
        detection = DetectionState.fresh([obs])
        config = PlannerConfig(beta=0.03)
        out = traj
        did_any = False
        for k in range(out.num_states - 1):
            pose = out.states[k, :3]
            out, detection, did = sense_and_replan(
                out, k, pose, detection, FAN, square_field, params, config,
                ReplannerConfig(initial_inflation=1.0),
            )
            did_any = did_any or did
        assert did_any
        checker = FootprintChecker(square_field, [obs])
        w = params.half_width
        local = np.array(
            [
                [params.front_length, -w],
                [params.front_length, w],
                [-params.rear_overhang, w],
                [-params.rear_overhang, -w],
            ]
        )
        assert checker.corners_valid(footprint_corners_batch(out.poses, local))

    def test_no_replan_without_new_detection(self, params, square_field):
        traj = _straight_traj()
        detection = DetectionState.fresh([])
        out, detection, did = sense_and_replan(
            traj, 0, traj.states[0, :3], detection, FAN, square_field, params,
            PlannerConfig(beta=0.03),
        )
        assert not did
        assert out is traj
