"""Shortest Reeds-Shepp paths under a curvature bound.

Candidate paths are generated for the full word family (CSC, CCC, CCCC,
CCSC, CCSCC and SCS, with time-flip / reflection / reversal transforms),
validated by exact arc replay, and the shortest valid candidate wins with a
lexicographic word-order tie-break.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import Polygon, footprint_inside_field
from .vehicle import FORWARD, REVERSE, VehicleParams, footprint, wrap_angle

LEFT, STRAIGHT, RIGHT = 1, 0, -1

_STEER_NAME = {LEFT: "L", STRAIGHT: "S", RIGHT: "R"}


@dataclass(frozen=True)
class RsSegment:
    steer: int  # LEFT / STRAIGHT / RIGHT
    gear: int  # FORWARD / REVERSE
    length: float  # >= 0, meters


@dataclass(frozen=True)
class RsPath:
    segments: Tuple[RsSegment, ...]
    turning_radius: float

    @property
    def total_length(self) -> float:
        return sum(s.length for s in self.segments)

    @property
    def word(self) -> str:
        return "".join(
            _STEER_NAME[s.steer] + ("+" if s.gear == FORWARD else "-")
            for s in self.segments
        )


def _M(theta: float) -> float:
    theta = theta % (2.0 * math.pi)
    if theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


def _polar(x: float, y: float) -> Tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


# --- base word solvers in the normalized frame (radius 1, start at origin) --


def _SLS(x, y, phi):
    phi = _M(phi)
    if abs(phi) >= math.pi * 0.99 or abs(phi) < 1e-12:
        return None
    if y > 0.0 and 0.0 < phi:
        xd = -y / math.tan(phi) + x
        t = xd - math.tan(phi / 2.0)
        u = phi
        v = math.hypot(x - xd, y) - math.tan(phi / 2.0)
        return t, u, v
    if y < 0.0 and 0.0 < phi:
        xd = -y / math.tan(phi) + x
        t = xd - math.tan(phi / 2.0)
        u = phi
        v = -math.hypot(x - xd, y) - math.tan(phi / 2.0)
        return t, u, v
    return None


def _LSL(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= 0.0:
        v = _M(phi - t)
        if v >= 0.0:
            return t, u, v
    return None


def _LSR(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    if u1 >= 4.0:
        u = math.sqrt(u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _M(t1 + theta)
        v = _M(t - phi)
        if t >= 0.0 and v >= 0.0:
            return t, u, v
    return None


def _LRL(x, y, phi):
    u1, t1 = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _M(t1 + 0.5 * u + math.pi)
        v = _M(phi - t + u)
        if t >= 0.0 and u <= 0.0:
            return t, u, v
    return None


def _tau_omega(u, v, xi, eta, phi):
    delta = _M(u - v)
    A = math.sin(u) - math.sin(delta)
    B = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * A - xi * B, xi * A + eta * B)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _M(t1 + math.pi) if t2 < 0.0 else _M(t1)
    return tau, _M(tau - u + v - phi)


def _LRLRn(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.hypot(xi, eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= 0.0 and v <= 0.0:
            return t, u, v
    return None


def _LRLRp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -0.5 * math.pi:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= 0.0 and v >= 0.0:
                return t, u, v
    return None


def _LRSL(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _M(theta + math.atan2(r, -2.0))
        v = _M(phi - 0.5 * math.pi - t)
        if t >= 0.0 and u <= 0.0 and v <= 0.0:
            return t, u, v
    return None


def _LRSR(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _M(t + 0.5 * math.pi - phi)
        if t >= 0.0 and u <= 0.0 and v <= 0.0:
            return t, u, v
    return None


def _LRSLR(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= 0.0:
            t = _M(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _M(t - phi)
            if t >= 0.0 and v >= 0.0:
                return t, u, v
    return None


_MIRROR = {LEFT: RIGHT, STRAIGHT: STRAIGHT, RIGHT: LEFT}


def _variants(solver, x, y, phi, steers, shape):
    """Apply time-flip / reflect / reverse transforms to a base word solver.

    ``shape`` maps the solver's (t, u, v) triple onto signed per-segment
    lengths (some words embed fixed quarter-turn segments).
    """
    out = []

    def emit(sol, flip_len, mirror, reverse):
        if sol is None:
            return
        lengths = shape(*sol)
        if flip_len:
            lengths = [-q for q in lengths]
        st = [(_MIRROR[s] if mirror else s) for s in steers]
        if reverse:
            lengths = lengths[::-1]
            st = st[::-1]
        out.append((lengths, st))

    for reverse in (False, True):
        if reverse:
            xs = x * math.cos(phi) + y * math.sin(phi)
            ys = x * math.sin(phi) - y * math.cos(phi)
        else:
            xs, ys = x, y
        emit(solver(xs, ys, phi), False, False, reverse)
        emit(solver(-xs, ys, -phi), True, False, reverse)
        emit(solver(xs, -ys, -phi), False, True, reverse)
        emit(solver(-xs, -ys, phi), True, True, reverse)
    return out


def _candidates(x: float, y: float, phi: float):
    cands = []
    ident = lambda t, u, v: [t, u, v]
    cands += _variants(_SLS, x, y, phi, [STRAIGHT, LEFT, STRAIGHT], ident)
    cands += _variants(_LSL, x, y, phi, [LEFT, STRAIGHT, LEFT], ident)
    cands += _variants(_LSR, x, y, phi, [LEFT, STRAIGHT, RIGHT], ident)
    cands += _variants(_LRL, x, y, phi, [LEFT, RIGHT, LEFT], ident)
    cands += _variants(
        _LRLRn, x, y, phi, [LEFT, RIGHT, LEFT, RIGHT], lambda t, u, v: [t, u, -u, v]
    )
    cands += _variants(
        _LRLRp, x, y, phi, [LEFT, RIGHT, LEFT, RIGHT], lambda t, u, v: [t, u, u, v]
    )
    half_pi = 0.5 * math.pi
    cands += _variants(
        _LRSL, x, y, phi, [LEFT, RIGHT, STRAIGHT, LEFT], lambda t, u, v: [t, -half_pi, u, v]
    )
    cands += _variants(
        _LRSR, x, y, phi, [LEFT, RIGHT, STRAIGHT, RIGHT], lambda t, u, v: [t, -half_pi, u, v]
    )
    cands += _variants(
        _LRSLR,
        x,
        y,
        phi,
        [LEFT, RIGHT, STRAIGHT, LEFT, RIGHT],
        lambda t, u, v: [t, -half_pi, u, -half_pi, v],
    )
    return cands


def _advance(pose, steer: int, signed_len: float):
    x, y, theta = pose
    if steer == STRAIGHT:
        return (x + signed_len * math.cos(theta), y + signed_len * math.sin(theta), theta)
    k = float(steer)  # curvature +1 (left) or -1 (right), radius 1
    dtheta = signed_len * k
    cx = x - math.sin(theta) / k
    cy = y + math.cos(theta) / k
    t2 = theta + dtheta
    return (cx + math.sin(t2) / k, cy - math.cos(t2) / k, t2)


def _replay_ok(lengths, steers, x, y, phi, tol=1e-8) -> bool:
    pose = (0.0, 0.0, 0.0)
    for L, s in zip(lengths, steers):
        pose = _advance(pose, s, L)
    dth = _M(pose[2] - phi)
    return math.hypot(pose[0] - x, pose[1] - y) <= tol and abs(dth) <= tol


def rs_shortest(start, goal, radius: float) -> RsPath:
    """Minimum-length Reeds-Shepp path from start to goal pose.

    Poses are (x, y, theta). Ties between equal-length words break on
    lexicographic word order, so the result is deterministic.
    """
    if radius <= 0.0:
        raise ValueError("turning radius must be positive")
    sx, sy, sth = float(start[0]), float(start[1]), float(start[2])
    gx, gy, gth = float(goal[0]), float(goal[1]), float(goal[2])
    dx, dy = gx - sx, gy - sy
    c, s = math.cos(sth), math.sin(sth)
    x = (c * dx + s * dy) / radius
    y = (-s * dx + c * dy) / radius
    phi = _M(gth - sth)
    if math.hypot(x, y) < 1e-12 and abs(phi) < 1e-12:
        return RsPath((), radius)

    best = None
    for lengths, steers in _candidates(x, y, phi):
        if not _replay_ok(lengths, steers, x, y, phi):
            continue
        segs = tuple(
            RsSegment(st, FORWARD if L >= 0.0 else REVERSE, abs(L) * radius)
            for L, st in zip(lengths, steers)
            if abs(L) > 1e-12
        )
        path = RsPath(segs, radius)
        key = (path.total_length, path.word)
        if best is None or key < best[0]:
            best = (key, path)
    if best is None:
        raise RuntimeError("no Reeds-Shepp candidate validated (unexpected)")
    return best[1]


def _advance_world(pose, curvature: float, signed_dist: float):
    """Advance a world pose along an arc (or line, curvature 0)."""
    x, y, theta = pose
    if curvature == 0.0:
        return (x + signed_dist * math.cos(theta), y + signed_dist * math.sin(theta), theta)
    k = curvature
    cx = x - math.sin(theta) / k
    cy = y + math.cos(theta) / k
    t2 = theta + signed_dist * k
    return (cx + math.sin(t2) / k, cy - math.cos(t2) / k, t2)


def _seg_motion(path: RsPath, seg: RsSegment) -> Tuple[float, float]:
    """(curvature, signed full length) of a segment."""
    k = float(seg.steer) / path.turning_radius
    return k, seg.length * (1.0 if seg.gear == FORWARD else -1.0)


def _segment_starts(path: RsPath, start) -> List[Tuple[float, float, float]]:
    poses = [(float(start[0]), float(start[1]), float(start[2]))]
    for seg in path.segments:
        k, sd = _seg_motion(path, seg)
        poses.append(_advance_world(poses[-1], k, sd))
    return poses


def pose_at(path: RsPath, start, s: float):
    """World pose at arc length s along the path."""
    starts = _segment_starts(path, start)
    acc = 0.0
    for seg, p0 in zip(path.segments, starts):
        if s <= acc + seg.length + 1e-12:
            k, _ = _seg_motion(path, seg)
            ds = max(0.0, s - acc) * (1 if seg.gear == FORWARD else -1)
            return _advance_world(p0, k, ds)
        acc += seg.length
    return starts[-1]


def _motion_at(path: RsPath, s: float):
    """(curvature, gear) of the segment containing arc length s."""
    acc = 0.0
    for seg in path.segments:
        if s < acc + seg.length - 1e-12:
            k = float(seg.steer) / path.turning_radius
            return k, seg.gear
        acc += seg.length
    if path.segments:
        seg = path.segments[-1]
        return float(seg.steer) / path.turning_radius, seg.gear
    return 0.0, FORWARD


def sample_arc_lengths(total: float, spacing: float) -> np.ndarray:
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    if total <= 1e-12:
        return np.array([0.0, total])
    n = int(math.floor((total - 1e-9) / spacing))
    ss = [i * spacing for i in range(n + 1)]
    ss.append(total)
    return np.asarray(ss)


def rs_sample(path: RsPath, start, spacing: float) -> np.ndarray:
    """Poses every ``spacing`` meters of arc length, endpoint included."""
    ss = sample_arc_lengths(path.total_length, spacing)
    starts = _segment_starts(path, start)
    out = np.empty((len(ss), 3))
    # Walk segments once; ss is sorted.
    seg_i = 0
    acc = 0.0
    for row, s in enumerate(ss):
        while seg_i < len(path.segments) and s > acc + path.segments[seg_i].length + 1e-12:
            acc += path.segments[seg_i].length
            seg_i += 1
        if seg_i >= len(path.segments):
            out[row] = starts[-1]
            continue
        seg = path.segments[seg_i]
        k, _ = _seg_motion(path, seg)
        ds = max(0.0, s - acc) * (1 if seg.gear == FORWARD else -1)
        out[row] = _advance_world(starts[seg_i], k, ds)
    out[:, 2] = np.mod(out[:, 2], 2.0 * math.pi)
    return out


def rs_sample_with_motion(path: RsPath, start, spacing: float):
    """Samples plus per-sample (curvature, gear) of the interval they open."""
    poses = rs_sample(path, start, spacing)
    ss = sample_arc_lengths(path.total_length, spacing)
    curv = np.zeros(len(ss))
    gear = np.full(len(ss), FORWARD, dtype=int)
    for i in range(len(ss)):
        probe = ss[i] if i == len(ss) - 1 else 0.5 * (ss[i] + ss[i + 1])
        k, g = _motion_at(path, probe)
        curv[i], gear[i] = k, g
    return poses, curv, gear


def rs_collision_free(
    path: RsPath,
    start,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    check_spacing: float = 0.2,
) -> bool:
    """Full-footprint validity of the path at ``check_spacing`` resolution."""
    from .geometry import polygon_polygon_collides

    for pose in rs_sample(path, start, check_spacing):
        fp = footprint(pose, params)
        if not footprint_inside_field(fp, field):
            return False
        for obs in obstacles:
            if polygon_polygon_collides(fp, obs):
                return False
    return True
