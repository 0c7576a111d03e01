"""Hierarchical MPC tracker: linearized QP warm start, nonlinear refinement.

The linear stage condenses the time-varying linearized bicycle dynamics into
a control-only quadratic program with stacked half-plane collision rows and
box bounds, solved with cvxopt. Its solution warm-starts an SLSQP refinement
over the exact Euler dynamics with signed-clearance constraints, run only
when the predicted footprint gets close to a boundary or obstacle.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers
from scipy.optimize import minimize

from .geometry import (
    GEOM_EPS,
    Polygon,
    SeparatorResult,
    _points_segments_distance,
    convex_polygons_clearance,
    sdf_points,
)
from .trajectory import Trajectory
from .vehicle import VehicleParams, footprint_corners

cvx_solvers.options["show_progress"] = False


class Infeasible(Exception):
    """No control satisfying the active constraint set exists."""


class QpInfeasible(Infeasible):
    pass


class RefineInfeasible(Infeasible):
    pass


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    refine_horizon: int = 10
    dt: float = 0.5
    q_diag: Tuple[float, float, float, float] = (10.0, 10.0, 5.0, 1.0)
    w_diag: Tuple[float, float] = (1.0, 1.0)
    a_max: float = 2.0
    max_steer: float = math.radians(30.0)
    v_max: float = 3.0  # predicted-speed cap; keeps catch-up transients linearizable
    safety_margin: float = 0.0
    refine_tol: float = 1e-4
    refine_maxiter: int = 50
    refine_skip_clearance: float = 0.25
    obstacle_range_factor: float = 2.0

    def __post_init__(self):
        if not 1 <= self.refine_horizon <= self.horizon:
            raise ValueError("need horizon >= refine_horizon >= 1")
        if min(self.q_diag) < 0 or min(self.w_diag) < 0:
            raise ValueError("weights must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.w_diag)


@dataclass
class ReferenceWindow:
    """States x_{r,k..k+N} (heading unwrapped) and controls u_{r,k..k+N-1}."""

    states: np.ndarray  # (N+1, 4)
    controls: np.ndarray  # (N, 2), columns [delta_r, a_r]

    @property
    def horizon(self) -> int:
        return len(self.controls)


def reference_window(
    traj: Trajectory,
    k: int,
    N: int,
    wheelbase: float,
    theta_hint: Optional[float] = None,
) -> ReferenceWindow:
    """Window the trajectory at index k, padding past the end with a stop.

    Headings are unwrapped along the window and shifted onto the 2*pi branch
    nearest ``theta_hint`` (the vehicle's current heading), so error terms
    never jump by full turns.
    """
    n = traj.num_states
    idx = np.minimum(np.arange(k, k + N + 1), n - 1)
    states = traj.states[idx].copy()
    curv = traj.curvatures[idx[:-1]]
    padded = idx[:-1] >= n - 1
    states[np.concatenate([[False], padded]), 3] = 0.0
    states[:, 2] = np.unwrap(states[:, 2])
    if theta_hint is not None:
        shift = round((theta_hint - states[0, 2]) / (2.0 * math.pi))
        states[:, 2] += 2.0 * math.pi * shift
    deltas = np.arctan(curv * wheelbase)
    deltas[padded] = 0.0
    # Feed-forward acceleration follows the reference speed profile, so the
    # effort penalty does not fight planned ramps into and out of stops.
    accels = (states[1:, 3] - states[:-1, 3]) / traj.dt
    controls = np.column_stack([deltas, accels])
    return ReferenceWindow(states, controls)


# --- linearization and stacking ----------------------------------------------


@dataclass
class LinearizedDynamics:
    A: np.ndarray  # (N, 4, 4)
    B: np.ndarray  # (N, 4, 2)
    A_bar: np.ndarray  # (4N, 4)
    B_bar: np.ndarray  # (4N, 2N)


def step_jacobians(theta_r, v_r, delta_r, dt, wheelbase):
    """A_k, B_k of the Euler bicycle model about a reference point."""
    A = np.array(
        [
            [1.0, 0.0, -v_r * math.sin(theta_r) * dt, math.cos(theta_r) * dt],
            [0.0, 1.0, v_r * math.cos(theta_r) * dt, math.sin(theta_r) * dt],
            [0.0, 0.0, 1.0, dt / wheelbase * math.tan(delta_r)],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    # Control order is [delta, a], matching the reference control
    # [arctan(c*L), 0]: steering drives the heading row, acceleration the
    # speed row.
    B = dt * np.array(
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [v_r / (wheelbase * math.cos(delta_r) ** 2), 0.0],
            [0.0, 1.0],
        ]
    )
    return A, B


def linearize(ref: ReferenceWindow, params: VehicleParams, dt: float) -> LinearizedDynamics:
    N = ref.horizon
    A = np.empty((N, 4, 4))
    B = np.empty((N, 4, 2))
    for j in range(N):
        theta_r = ref.states[j, 2]
        v_r = ref.states[j, 3]
        delta_r = ref.controls[j, 0]
        A[j], B[j] = step_jacobians(theta_r, v_r, delta_r, dt, params.wheelbase)
    A_bar = np.zeros((4 * N, 4))
    B_bar = np.zeros((4 * N, 2 * N))
    prod = np.eye(4)
    for i in range(N):
        prod = A[i] @ prod
        A_bar[4 * i : 4 * i + 4] = prod
        B_bar[4 * i : 4 * i + 4, 2 * i : 2 * i + 2] = B[i]
        for j in range(i):
            B_bar[4 * i : 4 * i + 4, 2 * j : 2 * j + 2] = (
                A[i] @ B_bar[4 * (i - 1) : 4 * i, 2 * j : 2 * j + 2]
            )
    return LinearizedDynamics(A, B, A_bar, B_bar)


# --- half-plane separators ----------------------------------------------------


@dataclass(frozen=True)
class HalfPlaneConstraint:
    """Line a*x + b*y + c = 0 with unit normal (a, b) pointing into safety."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if abs(self.a ** 2 + self.b ** 2 - 1.0) > 1e-9:
            raise ValueError("separator normal must be a unit vector")

    def value(self, p) -> float:
        return self.a * p[0] + self.b * p[1] + self.c


def _edge_line(a_pt, b_pt) -> HalfPlaneConstraint:
    d = b_pt - a_pt
    n = np.array([-d[1], d[0]]) / np.hypot(*d)
    return HalfPlaneConstraint(float(n[0]), float(n[1]), float(-(n @ a_pt)))


def _witness_line(sep: SeparatorResult) -> Optional[HalfPlaneConstraint]:
    n = sep.normal
    if not np.all(np.isfinite(n)) or np.hypot(*n) < 0.5:
        return None
    p2 = sep.point_on_b
    return HalfPlaneConstraint(float(n[0]), float(n[1]), float(-(n @ p2)))


def select_separators(
    x_ref: np.ndarray,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    reach: float = 25.0,
    obstacle_range_factor: float = 2.0,
) -> List[HalfPlaneConstraint]:
    """Half-plane separators active around one reference state.

    Boundary handling follows the corner type: an ordinary field corner
    (interior angle below pi) is treated as a concave boundary obstacle and
    contributes both wall lines, while a reflex vertex (a protrusion into
    the field) is convex and gets a single SDF-witness separator against the
    triangle it forms. Each nearby convex obstacle adds one witness line.
    """
    p = np.asarray(x_ref, dtype=float)[:2]
    theta = float(x_ref[2])
    forward = 1.0 if (len(x_ref) < 4 or x_ref[3] >= 0.0) else -1.0
    verts = field.vertices
    starts, ends = field.edge_arrays()
    n_edges = len(starts)
    dists = _points_segments_distance(p[None, :], starts, ends)[0]
    i = int(np.argmin(dists))
    heading = forward * np.array([math.cos(theta), math.sin(theta)])
    edge_dir = ends[i] - starts[i]
    along = float(heading @ edge_dir)
    if along >= 0.0:
        j = (i + 1) % n_edges
        shared = ends[i]
    else:
        j = (i - 1) % n_edges
        shared = starts[i]
    out = [_edge_line(starts[i], ends[i])]
    corners = footprint_corners(x_ref, params)
    if j != i and float(np.hypot(*(shared - p))) < reach:
        prev_vec = shared - (starts[i] if along >= 0.0 else ends[i])
        next_vec = (ends[j] if along >= 0.0 else starts[j]) - shared
        if along < 0.0:
            prev_vec, next_vec = -next_vec, -prev_vec
        turn = prev_vec[0] * next_vec[1] - prev_vec[1] * next_vec[0]
        if abs(turn) <= GEOM_EPS * max(1.0, float(np.hypot(*prev_vec))):
            pass  # collinear edges: one line covers both
        elif turn > 0.0:
            out.append(_edge_line(starts[j], ends[j]))  # ordinary corner
        else:
            # Reflex vertex: the protrusion triangle is a convex obstacle.
            a_far = starts[i] if np.allclose(shared, ends[i]) else ends[i]
            b_far = ends[j] if np.allclose(shared, starts[j]) else starts[j]
            tri = np.array([a_far, shared, b_far])
            line = _witness_line(sdf_points(corners, tri))
            if line is not None:
                out.append(line)
    limit = obstacle_range_factor * (params.front_length + params.half_width)
    for obs in obstacles:
        sep = sdf_points(corners, obs.vertices)
        if sep.distance < limit:
            line = _witness_line(sep)
            if line is not None:
                out.append(line)
    return out


def corner_offsets(params: VehicleParams) -> np.ndarray:
    w = params.half_width
    return np.array(
        [
            [params.front_length, -w],
            [params.front_length, w],
            [-params.rear_overhang, -w],
            [-params.rear_overhang, w],
        ]
    )


def corner_rows(
    sep: HalfPlaneConstraint, x_ref: np.ndarray, params: VehicleParams
) -> List[Tuple[np.ndarray, float]]:
    """First-order corner-safety rows: row @ [x,y,theta,v] >= bound.

    Linearizes a*x_c + b*y_c + c > 0 (corner position x_c from the pose) in
    theta about the reference heading. The theta coefficient is the heading
    sensitivity of the corner offset along the separator normal.
    """
    theta_r = float(x_ref[2])
    ct, st = math.cos(theta_r), math.sin(theta_r)
    out = []
    for lx, ly in corner_offsets(params):
        u = sep.a * (lx * ct - ly * st) + sep.b * (lx * st + ly * ct)
        du = sep.a * (-lx * st - ly * ct) + sep.b * (lx * ct - ly * st)
        row = np.array([sep.a, sep.b, du, 0.0])
        bound = -(u - du * theta_r) - sep.c
        out.append((row, bound))
    return out


# --- linear stage ---------------------------------------------------------------


def solve_qp(
    x_err: np.ndarray,
    dyn: LinearizedDynamics,
    ref: ReferenceWindow,
    constraints: Sequence[Sequence[HalfPlaneConstraint]],
    config: MpcConfig,
    params: VehicleParams,
) -> np.ndarray:
    """Stacked control errors minimizing the tracking objective.

    ``constraints[j]`` holds the separators for predicted step j+1. Returns
    the (N, 2) control sequence u_{k..k+N-1} (absolute, not errors).
    """
    N = ref.horizon
    Qb = np.kron(np.eye(N), config.Q)
    Wb = np.kron(np.eye(N), config.W)
    H = dyn.B_bar.T @ Qb @ dyn.B_bar + Wb
    f = dyn.B_bar.T @ Qb @ (dyn.A_bar @ x_err)
    pred_ref = ref.states[1:].reshape(-1)  # x_{r,k+1..k+N}
    free = dyn.A_bar @ x_err + pred_ref  # prediction at zero control error

    g_rows: List[np.ndarray] = []
    h_vals: List[float] = []
    for j in range(N):
        for sep in constraints[j] if j < len(constraints) else []:
            for row, bound in corner_rows(sep, ref.states[j + 1], params):
                # row @ x_pred >= bound  ->  -(row @ B_bar_j) u <= row@free - bound
                full = np.zeros(4 * N)
                full[4 * j : 4 * j + 4] = row
                g_rows.append(-(full @ dyn.B_bar))
                h_vals.append(float(full @ free) - bound - config.safety_margin)
    # Predicted-speed cap |v_{k+j}| <= v_max, linear in the state stack.
    for j in range(N):
        vrow = np.zeros(4 * N)
        vrow[4 * j + 3] = 1.0
        coeff = vrow @ dyn.B_bar
        base = float(vrow @ free)
        g_rows.append(coeff)
        h_vals.append(config.v_max - base)
        g_rows.append(-coeff)
        h_vals.append(config.v_max + base)
    # Box bounds on absolute controls: |u_err + u_ref| <= limits.
    lim = np.tile([config.max_steer, config.a_max], N)
    u_ref = ref.controls.reshape(-1)
    eye = np.eye(2 * N)
    G = np.vstack(g_rows + [eye, -eye]) if g_rows else np.vstack([eye, -eye])
    h = np.concatenate([h_vals, lim - u_ref, lim + u_ref])

    try:
        sol = cvx_solvers.qp(cvx_matrix(2.0 * H), cvx_matrix(2.0 * f), cvx_matrix(G), cvx_matrix(h))
    except ValueError as exc:
        raise QpInfeasible(str(exc)) from exc
    if sol["status"] != "optimal":
        raise QpInfeasible(f"qp status {sol['status']}")
    u_err = np.asarray(sol["x"]).reshape(-1)
    return (u_err + u_ref).reshape(N, 2)


# --- nonlinear stage -------------------------------------------------------------


def _euler_step(x, u, dt, wheelbase):
    return np.array(
        [
            x[0] + x[3] * math.cos(x[2]) * dt,
            x[1] + x[3] * math.sin(x[2]) * dt,
            x[2] + x[3] * math.tan(u[0]) / wheelbase * dt,
            x[3] + u[1] * dt,
        ]
    )


def _rollout_with_sensitivities(x0, U, dt, wheelbase):
    """Exact Euler states plus d(state_j)/dU for the refinement stage."""
    Np = len(U)
    states = np.empty((Np + 1, 4))
    states[0] = x0
    J = np.zeros((Np + 1, 4, 2 * Np))
    for j in range(Np):
        x = states[j]
        u = U[j]
        states[j + 1] = _euler_step(x, u, dt, wheelbase)
        A, B = step_jacobians(x[2], x[3], u[0], dt, wheelbase)
        J[j + 1] = A @ J[j]
        J[j + 1][:, 2 * j : 2 * j + 2] += B
    return states, J


def g_eval(
    x: np.ndarray, field: Polygon, obstacles: Sequence[Polygon], params: VehicleParams
) -> float:
    """Minimum signed clearance of the footprint to boundary and obstacles."""
    corners = footprint_corners(x, params)
    g = _field_clearance(corners, field)
    for obs in obstacles:
        g = min(g, convex_polygons_clearance(corners, obs))
    return g


def _field_clearance(corners: np.ndarray, field: Polygon) -> float:
    """Signed footprint-to-boundary distance, positive when fully inside."""
    starts, ends = field.edge_arrays()
    d_ce = _points_segments_distance(corners, starts, ends).min(axis=1)
    ca = corners
    cb = np.roll(corners, -1, axis=0)
    d_ve = _points_segments_distance(field.vertices, ca, cb).min()
    inside = field.contains_points(corners, tol=GEOM_EPS)
    if np.all(inside):
        return float(min(d_ce.min(), d_ve))
    return -float(d_ce[~inside].max())


def _g_with_grad(pose, field, obstacles, params):
    """Clearance and its gradient in (x, y, theta) via witness geometry."""
    corners = footprint_corners(pose, params)
    pos = np.asarray(pose, dtype=float)[:2]
    best = None  # (g, p1 on footprint, direction of increase)
    starts, ends = field.edge_arrays()
    d = _points_segments_distance(corners, starts, ends)
    ci, ei = np.unravel_index(int(np.argmin(d)), d.shape)
    p1 = corners[ci]
    p2 = _closest_on_segment(p1, starts[ei], ends[ei])
    gap = p1 - p2
    norm = float(np.hypot(*gap))
    g_field = _field_clearance(corners, field)
    if norm > 1e-12:
        direction = gap / norm if g_field > 0 else -gap / norm
    else:
        direction = np.zeros(2)
    best = (g_field, p1, direction)
    for obs in obstacles:
        sep = sdf_points(corners, obs.vertices)
        if sep.distance < best[0]:
            best = (sep.distance, sep.point_on_a, sep.normal)
    g, p1, n = best
    arm = p1 - pos
    grad = np.array([n[0], n[1], n[0] * -arm[1] + n[1] * arm[0]])
    return g, grad


def _closest_on_segment(q, a, b):
    d = b - a
    t = float(np.clip((q - a) @ d / max(float(d @ d), 1e-18), 0.0, 1.0))
    return a + t * d


def refine_nonlinear(
    u_warm: np.ndarray,
    x_k: np.ndarray,
    ref: ReferenceWindow,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: MpcConfig,
) -> Tuple[np.ndarray, dict]:
    """SLSQP refinement of the warm start under exact dynamics.

    Returns (controls (N',2), info). The warm start passes through
    unchanged when its exact rollout already clears every shape by
    ``refine_skip_clearance`` (constraints inactive, so the quadratic
    model's minimizer is first-order optimal within tolerance).
    """
    Np = config.refine_horizon
    U0 = np.asarray(u_warm, dtype=float)[:Np].copy()
    dt = config.dt
    L = params.wheelbase
    nearby = [
        o
        for o in obstacles
        if convex_polygons_clearance(footprint_corners(x_k, params), o)
        < config.obstacle_range_factor * (params.front_length + params.half_width)
        + abs(x_k[3]) * dt * Np
    ]

    states0, _ = _rollout_with_sensitivities(x_k, U0, dt, L)
    g0 = np.array([g_eval(s, field, nearby, params) for s in states0[1:]])
    info = {"skipped": False, "iterations": 0, "g_min_warm": float(g0.min())}
    if g0.min() >= config.refine_skip_clearance:
        info["skipped"] = True
        return U0, info

    Qm = config.Q
    Wm = config.W
    ref_states = ref.states[1 : Np + 1]
    ref_controls = ref.controls[:Np]

    cache = {}

    def rollout(U_flat):
        key = U_flat.tobytes()
        if key not in cache:
            U = U_flat.reshape(Np, 2)
            states, J = _rollout_with_sensitivities(x_k, U, dt, L)
            cache.clear()
            cache[key] = (states, J)
        return cache[key]

    def objective(U_flat):
        states, _ = rollout(U_flat)
        xe = states[1:] - ref_states
        ue = U_flat.reshape(Np, 2) - ref_controls
        return float(np.einsum("ij,jk,ik->", xe, Qm, xe) + np.einsum("ij,jk,ik->", ue, Wm, ue))

    def objective_grad(U_flat):
        states, J = rollout(U_flat)
        xe = states[1:] - ref_states
        ue = U_flat.reshape(Np, 2) - ref_controls
        grad = 2.0 * (ue @ Wm).reshape(-1)
        for j in range(Np):
            grad += 2.0 * (Qm @ xe[j]) @ J[j + 1]
        return grad

    def cons(U_flat):
        states, _ = rollout(U_flat)
        return np.array(
            [g_eval(s, field, nearby, params) - config.refine_tol for s in states[1:]]
        )

    def cons_jac(U_flat):
        states, J = rollout(U_flat)
        rows = np.zeros((Np, 2 * Np))
        for j in range(Np):
            _, grad3 = _g_with_grad(states[j + 1], field, nearby, params)
            rows[j] = grad3 @ J[j + 1][:3]
        return rows

    bounds = [(-config.max_steer, config.max_steer), (-config.a_max, config.a_max)] * Np
    result = minimize(
        objective,
        U0.reshape(-1),
        jac=objective_grad,
        method="SLSQP",
        bounds=bounds,
        constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
        options={"maxiter": config.refine_maxiter, "ftol": 1e-8},
    )
    info["iterations"] = int(result.get("nit", 0))
    U_ref = result.x.reshape(Np, 2)
    g_ref = cons(result.x) + config.refine_tol
    if g_ref.min() >= 0.0:
        # Keep whichever of warm start / refined iterate is feasible & better.
        if g0.min() >= 0.0 and objective(U0.reshape(-1)) < result.fun:
            return U0, info
        return U_ref, info
    if g0.min() >= 0.0:
        return U0, info
    # Neither iterate clears all shapes; prefer the least-violating one.
    if g_ref.min() > g0.min():
        raise RefineInfeasible(f"min clearance {g_ref.min():.4f}")
    raise RefineInfeasible(f"min clearance {g0.min():.4f}")


# --- full step -------------------------------------------------------------------


@dataclass
class TrackDiagnostics:
    qp_time: float
    refine_time: float
    refined: bool
    dropped_collision: bool
    g_min: float
    separator_count: int


def track_step(
    x_k: np.ndarray,
    traj: Trajectory,
    k: int,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: MpcConfig,
    refine: bool = True,
    drop_collision: bool = False,
) -> Tuple[np.ndarray, TrackDiagnostics]:
    """One MPC step: window, linearize, QP, then (optionally) refine.

    Returns the first control [delta, a] and diagnostics. ``refine=False``
    reproduces the baseline protocol where no nonlinear adjustment runs;
    ``drop_collision=True`` removes the linear collision rows (the
    documented fallback when the constrained QP has no solution).
    """
    x_k = np.asarray(x_k, dtype=float)
    N = config.horizon
    ref = reference_window(traj, k, N, params.wheelbase, theta_hint=float(x_k[2]))
    dyn = linearize(ref, params, config.dt)
    x_err = x_k - ref.states[0]

    reach = N * max(abs(float(ref.states[0, 3])), 1e-6) * config.dt + params.front_length
    if drop_collision:
        constraints: List[List[HalfPlaneConstraint]] = [[] for _ in range(N)]
    else:
        constraints = [
            select_separators(
                ref.states[j + 1], field, obstacles, params, reach, config.obstacle_range_factor
            )
            for j in range(N)
        ]

    t0 = time.perf_counter()
    try:
        U = solve_qp(x_err, dyn, ref, constraints, config, params)
        dropped = drop_collision
    except QpInfeasible:
        if drop_collision:
            raise
        constraints = [[] for _ in range(N)]
        U = solve_qp(x_err, dyn, ref, constraints, config, params)
        dropped = True
    qp_time = time.perf_counter() - t0

    refined = False
    info = {"g_min_warm": math.nan}
    t1 = time.perf_counter()
    if refine:
        U_fine, info = refine_nonlinear(U, x_k, ref, field, obstacles, params, config)
        refined = not info["skipped"]
        u0 = U_fine[0]
    else:
        u0 = U[0]
    refine_time = time.perf_counter() - t1

    diag = TrackDiagnostics(
        qp_time=qp_time,
        refine_time=refine_time,
        refined=refined,
        dropped_collision=dropped,
        g_min=float(info.get("g_min_warm", math.nan)),
        separator_count=sum(len(c) for c in constraints),
    )
    return np.array([float(u0[0]), float(u0[1])]), diag
