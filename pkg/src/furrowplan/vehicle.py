"""Bicycle-model kinematics, footprint construction and motion primitives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .geometry import Polygon

FORWARD = 1
REVERSE = -1


@dataclass(frozen=True)
class VehicleParams:
    """Geometric and actuation limits of the vehicle.

    ``rear_overhang`` defaults to a symmetric split of the body overhang,
    (body_length - wheelbase) / 2, since only the total length is usually
    known.
    """

    wheelbase: float = 2.6
    body_length: float = 4.7
    body_width: float = 2.2
    max_steer: float = math.radians(30.0)
    max_accel: float = 2.0
    rear_overhang: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be positive")
        if self.body_length < self.wheelbase:
            raise ValueError("body length must cover the wheelbase")
        if not 0.0 < self.max_steer < math.pi / 2.0:
            raise ValueError("max steer must lie in (0, pi/2)")
        if self.rear_overhang is None:
            object.__setattr__(
                self, "rear_overhang", (self.body_length - self.wheelbase) / 2.0
            )
        if self.rear_overhang < 0.0 or self.rear_overhang > self.body_length:
            raise ValueError("rear overhang out of range")

    @property
    def max_curvature(self) -> float:
        return math.tan(self.max_steer) / self.wheelbase

    @property
    def min_turn_radius(self) -> float:
        return 1.0 / self.max_curvature

    @property
    def front_length(self) -> float:
        """Distance from the rear axle to the front bumper."""
        return self.body_length - self.rear_overhang

    @property
    def half_width(self) -> float:
        return self.body_width / 2.0


def wrap_angle(theta: float) -> float:
    """Wrap to [0, 2*pi)."""
    wrapped = theta % (2.0 * math.pi)
    # Tiny negative inputs can round up to exactly 2*pi under fmod.
    return 0.0 if wrapped >= 2.0 * math.pi else wrapped


def wrap_to_pi(theta: float) -> float:
    """Wrap to [-pi, pi)."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if wrapped >= math.pi else wrapped


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.theta, self.v))):
            raise ValueError("vehicle state must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v])


@dataclass(frozen=True)
class ControlInput:
    delta: float
    a: float

    def clipped(self, params: VehicleParams) -> "ControlInput":
        return ControlInput(
            float(np.clip(self.delta, -params.max_steer, params.max_steer)),
            float(np.clip(self.a, -params.max_accel, params.max_accel)),
        )


@dataclass(frozen=True)
class MotionPrimitive:
    """Fixed-length arc (or straight) of bounded curvature."""

    curvature: float
    direction: int  # FORWARD or REVERSE
    arc_length: float

    def __post_init__(self):
        if self.direction not in (FORWARD, REVERSE):
            raise ValueError("direction must be +1 (forward) or -1 (reverse)")
        if self.arc_length <= 0.0:
            raise ValueError("arc length must be positive")


def step(x_k: VehicleState, u_k: ControlInput, dt: float, params: VehicleParams) -> VehicleState:
    """One forward-Euler step of the discrete bicycle model."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return VehicleState(
        x_k.x + x_k.v * math.cos(x_k.theta) * dt,
        x_k.y + x_k.v * math.sin(x_k.theta) * dt,
        x_k.theta + x_k.v * math.tan(u_k.delta) / params.wheelbase * dt,
        x_k.v + u_k.a * dt,
    )


def step_array(x: np.ndarray, u: np.ndarray, dt: float, params: VehicleParams) -> np.ndarray:
    """Euler step on raw [x, y, theta, v] / [delta, a] arrays (no wrapping)."""
    return np.array(
        [
            x[0] + x[3] * math.cos(x[2]) * dt,
            x[1] + x[3] * math.sin(x[2]) * dt,
            x[2] + x[3] * math.tan(u[0]) / params.wheelbase * dt,
            x[3] + u[1] * dt,
        ]
    )


def apply_primitive(pose, mp: MotionPrimitive):
    """Exact arc-geometry propagation of a pose (x, y, theta)."""
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    s = mp.arc_length * (1.0 if mp.direction == FORWARD else -1.0)
    if abs(mp.curvature) < 1e-12:
        return np.array([x + s * math.cos(theta), y + s * math.sin(theta), wrap_angle(theta)])
    k = mp.curvature
    dtheta = s * k
    # Rotate about the turning center at radius 1/|k|.
    cx = x - math.sin(theta) / k
    cy = y + math.cos(theta) / k
    t2 = theta + dtheta
    return np.array([cx + math.sin(t2) / k, cy - math.cos(t2) / k, wrap_angle(t2)])


def sample_primitive(pose, mp: MotionPrimitive, spacing: float) -> np.ndarray:
    """Poses along the primitive every ``spacing`` meters, endpoint included."""
    n = max(1, int(math.ceil(mp.arc_length / spacing)))
    out = np.empty((n + 1, 3))
    out[0] = np.asarray(pose, dtype=float)[:3]
    for i in range(1, n + 1):
        part = MotionPrimitive(mp.curvature, mp.direction, mp.arc_length * i / n)
        out[i] = apply_primitive(pose, part)
    return out


def footprint_corners(pose, params: VehicleParams) -> np.ndarray:
    """CCW rectangle corners of the body at pose, in world coordinates."""
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    l = params.front_length
    r = params.rear_overhang
    w = params.half_width
    local = np.array([[l, -w], [l, w], [-r, w], [-r, -w]])
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def footprint(pose, params: VehicleParams) -> Polygon:
    return Polygon(footprint_corners(pose, params))


def primitive_set(params: VehicleParams, n_curv: int, arc_length: float) -> List[MotionPrimitive]:
    """2*n_curv primitives: curvatures uniform on [-c_max, c_max], both gears."""
    if n_curv < 3 or n_curv % 2 == 0:
        raise ValueError("n_curv must be odd and >= 3 (zero curvature included)")
    curvatures = np.linspace(-params.max_curvature, params.max_curvature, n_curv)
    curvatures[n_curv // 2] = 0.0
    return [
        MotionPrimitive(float(k), d, arc_length)
        for d in (FORWARD, REVERSE)
        for k in curvatures
    ]
