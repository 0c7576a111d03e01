"""Trajectory container: validation, windows and concatenation."""
import numpy as np
import pytest

from furrowplan.trajectory import Trajectory, concatenate
from furrowplan.vehicle import FORWARD, REVERSE


def _straight(n=5, x0=0.0, v=2.0, dt=0.5, gear=FORWARD):
    xs = x0 + np.arange(n) * v * dt
    states = np.column_stack([xs, np.zeros(n), np.zeros(n), np.full(n, v)])
    return Trajectory(states, np.zeros(n), np.full(n, gear), dt)


class TestValidation:
    def test_shapes_must_agree(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((4, 4)), np.zeros(3), np.ones(4), 0.5)
        with pytest.raises(ValueError):
            Trajectory(np.zeros((4, 3)), np.zeros(4), np.ones(4), 0.5)
        with pytest.raises(ValueError):
            Trajectory(np.zeros((4, 4)), np.zeros(4), np.ones(4), -0.5)

    def test_gears_must_be_unit(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((3, 4)), np.zeros(3), np.array([1, 0, 1]), 0.5)

    def test_basic_accessors(self):
        traj = _straight(5)
        assert traj.num_states == 5
        assert traj.positions.shape == (5, 2)
        assert traj.poses.shape == (5, 3)
        assert traj.path_length == pytest.approx(4.0)


class TestWindow:
    def test_window_inclusive(self):
        traj = _straight(6)
        w = traj.window(2, 4)
        assert w.num_states == 3
        assert np.allclose(w.states, traj.states[2:5])
        assert w.dt == traj.dt

    def test_window_bounds(self):
        traj = _straight(4)
        with pytest.raises(IndexError):
            traj.window(2, 5)
        with pytest.raises(IndexError):
            traj.window(3, 2)


class TestConcatenate:
    def test_joins_at_shared_pose(self):
        a = _straight(4)
        b = _straight(3, x0=a.states[-1, 0])
        joined = concatenate([a, b])
        assert joined.num_states == 6
        assert np.allclose(joined.states[:, 0], np.arange(6) * 1.0)

    def test_junction_takes_next_piece_kinematics(self):
        a = _straight(3, v=2.0)
        b = _straight(3, x0=a.states[-1, 0], v=2.0)
        b.states[0, 3] = 0.0  # next piece starts at rest
        b = Trajectory(b.states, np.full(3, 0.1), np.full(3, REVERSE), 0.5)
        joined = concatenate([a, b])
        j = a.num_states - 1
        assert joined.states[j, 3] == pytest.approx(0.0)
        assert joined.curvatures[j] == pytest.approx(0.1)
        assert joined.gears[j] == REVERSE

    def test_rejects_pose_gap(self):
        a = _straight(3)
        b = _straight(3, x0=99.0)
        with pytest.raises(ValueError):
            concatenate([a, b])

    def test_single_piece_identity(self):
        a = _straight(4)
        joined = concatenate([a])
        assert np.array_equal(joined.states, a.states)
