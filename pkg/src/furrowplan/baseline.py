"""Clamped cubic B-spline smoother used as the comparison baseline.

Control points are the reference vertices with each segment midpoint
inserted between them. The curve is sampled uniformly in parameter, and no
curvature limit is enforced: sharp reference corners simply produce high
curvature, which is exactly the weakness the deviation comparison exposes.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import BSpline

from .geometry import Polyline
from .trajectory import Trajectory
from .vehicle import FORWARD

DEGREE = 3


def _control_points(R: Polyline) -> np.ndarray:
    pts = R.points
    ctrl = [pts[0]]
    for j in range(len(pts) - 1):
        ctrl.append((pts[j] + pts[j + 1]) / 2.0)
        ctrl.append(pts[j + 1])
    ctrl = np.asarray(ctrl)
    # A cubic needs at least degree+1 control points; short references get
    # further midpoint subdivision, which leaves the polyline shape intact.
    while len(ctrl) < DEGREE + 1:
        mids = (ctrl[:-1] + ctrl[1:]) / 2.0
        merged = np.empty((len(ctrl) + len(mids), 2))
        merged[0::2] = ctrl
        merged[1::2] = mids
        ctrl = merged
    return ctrl


def _clamped_spline(ctrl: np.ndarray) -> BSpline:
    n = len(ctrl)
    interior = np.arange(1, n - DEGREE, dtype=float)
    span = float(n - DEGREE)
    knots = np.concatenate([np.zeros(DEGREE + 1), interior, np.full(DEGREE + 1, span)])
    return BSpline(knots, ctrl, DEGREE)


def bspline_curvatures(spline: BSpline, ts: np.ndarray) -> np.ndarray:
    """Signed curvature from analytic first and second derivatives."""
    d1 = spline.derivative(1)(ts)
    d2 = spline.derivative(2)(ts)
    speed2 = d1[:, 0] ** 2 + d1[:, 1] ** 2
    num = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return num / np.maximum(speed2, 1e-12) ** 1.5


def bspline_smooth(
    R: Polyline, samples_per_interval: int = 10, v_r: float = 2.0, dt: float = 0.5
) -> Trajectory:
    """Smooth R into a constant-speed trajectory along the clamped spline.

    The spline is sampled densely in parameter only to build an arc-length
    table; the returned states are spaced uniformly in arc length so that one
    time step covers at most v_r * dt metres of curve.
    """
    if samples_per_interval < 1:
        raise ValueError("need at least one sample per control interval")
    ctrl = _control_points(R)
    spline = _clamped_spline(ctrl)
    span = spline.t[-1]
    dense = max(int(span) * samples_per_interval, 1) * 8
    ts = np.linspace(0.0, span, dense + 1)
    xy = spline(ts)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    total = float(arc[-1])
    n_steps = max(int(np.ceil(total / (v_r * dt) - 1e-9)), 1)
    s_grid = np.linspace(0.0, total, n_steps + 1)
    t_grid = np.interp(s_grid, arc, ts)
    xy = spline(t_grid)
    d1 = spline.derivative(1)(t_grid)
    theta = np.mod(np.arctan2(d1[:, 1], d1[:, 0]), 2.0 * np.pi)
    curv = bspline_curvatures(spline, t_grid)
    speed = total / n_steps / dt
    states = np.column_stack([xy, theta, np.full(len(t_grid), speed)])
    gears = np.full(len(t_grid), FORWARD, dtype=int)
    return Trajectory(states, curv, gears, dt)


def curvature_violation_ratio(traj: Trajectory, c_max: float) -> float:
    """Fraction of trajectory states whose |curvature| exceeds c_max."""
    if c_max <= 0:
        raise ValueError("curvature bound must be positive")
    return float(np.mean(np.abs(traj.curvatures) > c_max))
