"""Spline baseline smoother behaviour and its known curvature weakness."""
import numpy as np
import pytest

from furrowplan.baseline import (
    bspline_curvatures,
    bspline_smooth,
    curvature_violation_ratio,
)
from furrowplan.geometry import Polyline
from furrowplan.planner import deviation_along
from furrowplan.trajectory import Trajectory
from furrowplan.vehicle import FORWARD, VehicleParams


class TestSmoothing:
    def test_straight_line_stays_straight(self):
        R = Polyline([[0, 0], [40, 0]])
        traj = bspline_smooth(R)
        assert np.allclose(traj.states[:, 1], 0.0, atol=1e-9)
        assert np.allclose(traj.curvatures, 0.0, atol=1e-9)
        assert deviation_along(traj.positions, R) == pytest.approx(0.0, abs=1e-9)

    def test_endpoints_clamped(self):
        R = Polyline([[0, 0], [20, 0], [20, 15]])
        traj = bspline_smooth(R)
        assert np.allclose(traj.states[0, :2], [0, 0], atol=1e-9)
        assert np.allclose(traj.states[-1, :2], [20, 15], atol=1e-9)

    def test_speed_is_feasible_and_uniform(self):
        R = Polyline([[0, 0], [30, 0], [30, 20], [0, 20]])
        v_r, dt = 2.0, 0.5
        traj = bspline_smooth(R, v_r=v_r, dt=dt)
        assert np.all(traj.states[:, 3] <= v_r + 1e-9)
        gaps = np.hypot(*np.diff(traj.positions, axis=0).T)
        # Straight-chord spacing never exceeds the arc covered per step.
        assert np.all(gaps <= v_r * dt + 1e-9)
        assert np.ptp(traj.states[:, 3]) == pytest.approx(0.0, abs=1e-12)

    def test_corner_produces_curvature_spike(self):
        # Tight hairpin: the rounded corner radius falls below the vehicle
        # minimum, so some states must exceed the curvature bound.
        R = Polyline([[0, 0], [12, 0], [0, 3]])
        params = VehicleParams()
        traj = bspline_smooth(R)
        ratio = curvature_violation_ratio(traj, params.max_curvature)
        assert ratio > 0.0

    def test_zigzag_deviation_positive(self):
        R = Polyline([[0, 0], [10, 5], [20, 0], [30, 5]])
        traj = bspline_smooth(R)
        assert deviation_along(traj.positions, R) > 0.0

    def test_denser_sampling_converges(self):
        R = Polyline([[0, 0], [15, 0], [15, 12], [0, 12]])
        coarse = bspline_smooth(R, samples_per_interval=5)
        fine = bspline_smooth(R, samples_per_interval=40)
        # Arc-length estimate and hence step count stabilise under refinement.
        assert coarse.path_length == pytest.approx(fine.path_length, rel=1e-3)
        dev_c = deviation_along(coarse.positions, R)
        dev_f = deviation_along(fine.positions, R)
        assert dev_c == pytest.approx(dev_f, rel=0.05, abs=0.05)

    def test_invalid_sampling_rejected(self):
        with pytest.raises(ValueError):
            bspline_smooth(Polyline([[0, 0], [1, 0]]), samples_per_interval=0)


class TestCurvature:
    def test_circle_arc_curvature(self):
        # Sampled curvature of the smoothed square stays finite and signed.
        R = Polyline([[0, 0], [20, 0], [20, 20], [0, 20]])
        traj = bspline_smooth(R)
        assert np.isfinite(traj.curvatures).all()
        assert traj.curvatures.max() > 0.0  # left turns around the square

    def test_violation_ratio_bounds(self):
        states = np.zeros((4, 4))
        traj = Trajectory(states, np.array([0.0, 0.5, 0.5, 0.0]), np.full(4, FORWARD), 0.5)
        assert curvature_violation_ratio(traj, 0.3) == pytest.approx(0.5)
        assert curvature_violation_ratio(traj, 1.0) == 0.0
        with pytest.raises(ValueError):
            curvature_violation_ratio(traj, 0.0)
