"""Scenario generation, closed-loop simulation and experiment metrics.

A scenario bundles a field polygon, reference polylines and vehicle limits.
Simulations smooth one reference (or pass it through raw), then run the
sense / replan / track / step loop against the kinematic plant and classify
the outcome. All randomness flows from one integer seed through named
substreams, so every artifact is reproducible; wall-clock timings are only
collected when explicitly requested, keeping default reports byte-stable.
"""
from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import dataclass, field as dc_field, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .baseline import bspline_smooth, curvature_violation_ratio
from .geometry import (
    Polygon,
    Polyline,
    SensorFan,
    footprint_inside_field,
    polygon_polygon_collides,
)
from .planner import PlanNotFound, PlannerConfig, plan_reference
from .replanner import DetectionState, ReplannerConfig, sense_and_replan
from .tracker import Infeasible, MpcConfig, _euler_step, track_step
from .trajectory import Trajectory
from .vehicle import FORWARD, VehicleParams, footprint, wrap_to_pi


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose under a master seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


# --- scenario ------------------------------------------------------------------


@dataclass
class Scenario:
    field: Polygon
    reference_paths: List[Polyline]
    vehicle: VehicleParams
    obstacles: List[Polygon]
    rng_seed: int


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "field": sc.field.vertices.tolist(),
        "paths": [p.points.tolist() for p in sc.reference_paths],
        "vehicle": {
            "L": sc.vehicle.wheelbase,
            "length": sc.vehicle.body_length,
            "width": sc.vehicle.body_width,
            "max_steer_deg": math.degrees(sc.vehicle.max_steer),
            "max_accel": sc.vehicle.max_accel,
        },
        "obstacles": [o.vertices.tolist() for o in sc.obstacles],
        "seed": sc.rng_seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    veh = data.get("vehicle", {})
    params = VehicleParams(
        wheelbase=float(veh.get("L", 2.6)),
        body_length=float(veh.get("length", 4.7)),
        body_width=float(veh.get("width", 2.2)),
        max_steer=math.radians(float(veh.get("max_steer_deg", 30.0))),
        max_accel=float(veh.get("max_accel", 2.0)),
    )
    return Scenario(
        field=Polygon(np.asarray(data["field"], dtype=float)),
        reference_paths=[Polyline(np.asarray(p, dtype=float)) for p in data["paths"]],
        vehicle=params,
        obstacles=[Polygon(np.asarray(o, dtype=float)) for o in data.get("obstacles", [])],
        rng_seed=int(data.get("seed", 0)),
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- synthetic fields -----------------------------------------------------------

FIELD_STYLES = ("rectangular", "convex", "notched")
_PATHS_PER_FIELD = 20
_MARGIN = 8.0  # vertex clearance from the boundary, covers the footprint


def _field_polygon(style: str, rng: np.random.Generator) -> Polygon:
    w = 66.0 + rng.uniform(0.0, 8.0)
    h = 42.0 + rng.uniform(0.0, 6.0)
    if style == "rectangular":
        return Polygon([(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)])
    if style == "convex":
        # Octagon: rectangle with clipped corners, always convex.
        cx = rng.uniform(4.0, 9.0)
        cy = rng.uniform(4.0, 8.0)
        return Polygon(
            [
                (cx, 0.0),
                (w - cx, 0.0),
                (w, cy),
                (w, h - cy),
                (w - cx, h),
                (cx, h),
                (0.0, h - cy),
                (0.0, cy),
            ]
        )
    if style == "notched":
        # Rectangle with a notch cut into the top edge.
        x0 = rng.uniform(0.3, 0.45) * w
        x1 = x0 + rng.uniform(0.12, 0.2) * w
        depth = rng.uniform(0.15, 0.25) * h
        return Polygon(
            [
                (0.0, 0.0),
                (w, 0.0),
                (w, h),
                (x1, h),
                (x1, h - depth),
                (x0, h - depth),
                (x0, h),
                (0.0, h),
            ]
        )
    raise ValueError(f"unknown field style {style!r}")


def _path_candidate(kind: str, box: Tuple[float, float, float, float], rng) -> np.ndarray:
    """One reference polyline of the requested shape inside the inset box."""
    xmin, xmax, ymin, ymax = box
    span = xmax - xmin
    x0 = xmin + rng.uniform(0.0, 0.15) * span
    x1 = xmax - rng.uniform(0.0, 0.15) * span
    d = rng.uniform(5.0, 9.0)
    if kind == "straight":
        y = rng.uniform(ymin, ymax)
        return np.array([(x0, y), (x1, y)])
    if kind == "corner":
        y0 = rng.uniform(ymin, ymax - 12.0)
        y1 = y0 + rng.uniform(10.0, min(18.0, ymax - y0))
        return np.array([(x0, y0), (x1, y0), (x1, y1)])
    if kind == "uturn":
        y0 = rng.uniform(ymin, ymax - d)
        return np.array([(x0, y0), (x1, y0), (x1, y0 + d), (x0, y0 + d)])
    if kind == "zigzag":
        y0 = rng.uniform(ymin, ymax - 2.0 * d)
        return np.array(
            [
                (x0, y0),
                (x1, y0),
                (x1, y0 + d),
                (x0, y0 + d),
                (x0, y0 + 2.0 * d),
                (x1, y0 + 2.0 * d),
            ]
        )
    raise ValueError(f"unknown path kind {kind!r}")


_PATH_KINDS = ("straight", "corner", "uturn", "zigzag")


def generate_field(seed: int, style: str) -> Scenario:
    """Deterministic synthetic scenario: one field and 20 reference paths."""
    if style not in FIELD_STYLES:
        raise ValueError(f"style must be one of {FIELD_STYLES}")
    rng = rng_stream(seed, f"field-{style}")
    field = _field_polygon(style, rng)
    verts = field.vertices
    xmin, ymin = verts.min(axis=0) + _MARGIN
    xmax, ymax = verts.max(axis=0) - _MARGIN
    box = (xmin, xmax, ymin, ymax)
    paths: List[Polyline] = []
    for i in range(_PATHS_PER_FIELD):
        kind = _PATH_KINDS[i % len(_PATH_KINDS)]
        for _ in range(60):
            pts = _path_candidate(kind, box, rng)
            if _path_fits(pts, field):
                paths.append(Polyline(pts))
                break
        else:
            # Fallback: a centered straight furrow always fits.
            ymid = 0.5 * (ymin + ymax)
            paths.append(Polyline([(xmin, ymid), (xmax, ymid)]))
    return Scenario(field=field, reference_paths=paths, vehicle=VehicleParams(), obstacles=[], rng_seed=seed)


def _path_fits(pts: np.ndarray, field: Polygon) -> bool:
    """Whole path keeps the margin, not just its vertices.

    Concave fields (the notched style) can swallow a segment whose endpoints
    are both well inside, so segments are sampled densely.
    """
    samples = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        n = max(int(math.ceil(float(np.hypot(*(b - a))) / 2.0)), 1)
        for t in np.linspace(0.0, 1.0, n + 1)[1:]:
            samples.append(a + t * (b - a))
    for p in samples:
        if not field.contains_point(p):
            return False
        if field.boundary_distance(p) < _MARGIN - 1e-9:
            return False
    return True


# --- metrics ---------------------------------------------------------------------


def deviation_degree(traj: Trajectory, R: Polyline) -> float:
    """Path-length-weighted average distance from the reference polyline."""
    pts = traj.positions
    if len(pts) < 2:
        raise ValueError("need at least two states")
    d = np.diff(pts, axis=0)
    steps = np.hypot(d[:, 0], d[:, 1])
    total = float(steps.sum())
    if total <= 0.0:
        raise ValueError("zero-length trajectory")
    return float(R.distances_to_many(pts[1:]) @ steps) / total


@dataclass(frozen=True)
class Outcome:
    success: bool
    failure_cause: Optional[str] = None


def classify_outcome(final_state, traj_end_pose, collided: bool) -> Outcome:
    """Failure iff collided, > 10 m from the endpoint, or > 60 deg off."""
    if collided:
        return Outcome(False, "collision")
    fs = np.asarray(final_state, dtype=float)
    end = np.asarray(traj_end_pose, dtype=float)
    if float(np.hypot(*(fs[:2] - end[:2]))) > 10.0:
        return Outcome(False, "distance")
    if abs(wrap_to_pi(fs[2] - end[2])) > math.radians(60.0):
        return Outcome(False, "angle")
    return Outcome(True, None)


# --- smoothing front ends ----------------------------------------------------------


def raw_trajectory(R: Polyline, v_r: float = 2.0, dt: float = 0.5) -> Trajectory:
    """Constant-speed resampling of the reference itself (no smoothing)."""
    spacing = v_r * dt
    cum = np.concatenate([[0.0], np.cumsum(R.seg_lengths)])
    svals = np.arange(0.0, R.total_length + spacing / 2.0, spacing)
    svals[-1] = min(svals[-1], R.total_length)
    pts = []
    headings = []
    for s in svals:
        j = min(np.searchsorted(cum, s, side="right") - 1, R.num_segments - 1)
        t = (s - cum[j]) / R.seg_lengths[j]
        pts.append(R.points[j] + t * (R.points[j + 1] - R.points[j]))
        headings.append(R.phis[j])
    pts = np.asarray(pts)
    states = np.column_stack([pts, headings, np.full(len(pts), v_r)])
    return Trajectory(states, np.zeros(len(pts)), np.full(len(pts), FORWARD, dtype=int), dt)


SMOOTHERS = ("hybrid", "bspline", "raw")


# --- closed-loop simulation --------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    planner: PlannerConfig = PlannerConfig(beta=0.03)
    mpc: MpcConfig = MpcConfig()
    replanner: ReplannerConfig = ReplannerConfig(initial_inflation=1.0)
    fan_range: float = 15.0
    fan_fov: float = math.pi / 2.0
    detection_enabled: bool = True
    collect_timing: bool = False
    plant_substeps: int = 1  # >1 simulates a finer plant than the MPC model

    def fan(self) -> SensorFan:
        return SensorFan(self.fan_range, self.fan_fov)


@dataclass
class TraceRow:
    t: float
    x: float
    y: float
    theta: float
    v: float
    delta: float
    a: float
    mode: str  # "plan", or "replan" on the step where a replan fired
    g_min: float


@dataclass
class RunReport:
    method: str
    path_index: int
    seed: int
    n_obstacles: int
    success: bool
    failure_cause: Optional[str]
    deviation_degree: Optional[float]
    curvature_violation_ratio: Optional[float]
    replan_count: int
    plan_time_s: Optional[float] = None
    control_time_mean_s: Optional[float] = None
    control_time_var_s: Optional[float] = None
    replan_times_s: Optional[List[float]] = None
    overrides: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _plant_step(x, u, dt, wheelbase, substeps: int):
    if substeps <= 1:
        return _euler_step(x, u, dt, wheelbase)
    sub = dt / substeps
    for _ in range(substeps):
        x = _euler_step(x, u, sub, wheelbase)
    return x


def _collided(pose, field: Polygon, obstacles: Sequence[Polygon], params: VehicleParams) -> bool:
    fp = footprint(pose, params)
    if not footprint_inside_field(fp, field):
        return True
    return any(polygon_polygon_collides(fp, ob) for ob in obstacles)


def simulate_closed_loop(
    scenario: Scenario,
    path_index: int,
    smoother: str,
    config: SimulationConfig = SimulationConfig(),
) -> Tuple[RunReport, List[TraceRow]]:
    """Smooth one reference path and track it in closed loop.

    Baseline smoothers (bspline, raw) skip the nonlinear refinement stage
    and rely on the constraint-dropping QP fallback, mirroring how the
    comparison is run. Obstacles start undetected; detection, replanning
    and splicing happen inside the loop when enabled.
    """
    if smoother not in SMOOTHERS:
        raise ValueError(f"smoother must be one of {SMOOTHERS}")
    R = scenario.reference_paths[path_index]
    field = scenario.field
    params = scenario.vehicle
    timing = config.collect_timing

    t0 = time.perf_counter()
    try:
        if smoother == "hybrid":
            traj = plan_reference(R, field, [], params, config.planner)
        elif smoother == "bspline":
            traj = bspline_smooth(R, v_r=config.planner.v_r, dt=config.planner.dt)
        else:
            traj = raw_trajectory(R, config.planner.v_r, config.planner.dt)
    except PlanNotFound:
        report = RunReport(
            method=smoother,
            path_index=path_index,
            seed=scenario.rng_seed,
            n_obstacles=len(scenario.obstacles),
            success=False,
            failure_cause="no_plan",
            deviation_degree=None,
            curvature_violation_ratio=None,
            replan_count=0,
        )
        return report, []
    plan_time = time.perf_counter() - t0

    fan = config.fan()
    detection = DetectionState.fresh(scenario.obstacles)
    refine = smoother == "hybrid"
    x = traj.states[0].copy()
    trace: List[TraceRow] = []
    control_times: List[float] = []
    replan_times: List[float] = []
    replan_count = 0
    collided = False
    failure_cause: Optional[str] = None
    k = 0
    while k < traj.num_states - 1:
        mode = "plan"
        if config.detection_enabled and detection.undetected:
            t1 = time.perf_counter()
            try:
                traj, detection, did = sense_and_replan(
                    traj, k, x[:3], detection, fan, field, params,
                    config.planner, config.replanner,
                )
            except PlanNotFound:
                failure_cause = "no_plan"
                break
            if did:
                replan_count += 1
                replan_times.append(time.perf_counter() - t1)
                mode = "replan"
        t2 = time.perf_counter()
        try:
            u, diag = track_step(
                x, traj, k, field, list(detection.known), params, config.mpc,
                refine=refine,
            )
        except Infeasible:
            try:
                u, diag = track_step(
                    x, traj, k, field, list(detection.known), params, config.mpc,
                    refine=False,
                )
            except Infeasible:
                failure_cause = "control_error"
                break
        control_times.append(time.perf_counter() - t2)
        x = _plant_step(x, u, config.mpc.dt, params.wheelbase, config.plant_substeps)
        trace.append(
            TraceRow(
                t=(k + 1) * config.mpc.dt,
                x=float(x[0]),
                y=float(x[1]),
                theta=float(x[2]),
                v=float(x[3]),
                delta=float(u[0]),
                a=float(u[1]),
                mode=mode,
                g_min=float(diag.g_min),
            )
        )
        if _collided(x[:3], field, scenario.obstacles, params):
            collided = True
            break
        k += 1

    if failure_cause is None:
        outcome = classify_outcome(x, traj.states[-1, :3], collided)
        failure_cause = outcome.failure_cause
        success = outcome.success
    else:
        success = False

    executed = Trajectory(
        np.array([[r.x, r.y, r.theta, r.v] for r in trace]) if len(trace) >= 2 else traj.states[:2],
        np.zeros(max(len(trace), 2)),
        np.full(max(len(trace), 2), FORWARD, dtype=int),
        config.mpc.dt,
    )
    report = RunReport(
        method=smoother,
        path_index=path_index,
        seed=scenario.rng_seed,
        n_obstacles=len(scenario.obstacles),
        success=success,
        failure_cause=failure_cause,
        deviation_degree=deviation_degree(executed, R) if len(trace) >= 2 else None,
        curvature_violation_ratio=curvature_violation_ratio(traj, params.max_curvature),
        replan_count=replan_count,
        plan_time_s=plan_time if timing else None,
        control_time_mean_s=float(np.mean(control_times)) if timing and control_times else None,
        control_time_var_s=float(np.var(control_times)) if timing and control_times else None,
        replan_times_s=replan_times if timing else None,
    )
    return report, trace


# --- random obstacle trials --------------------------------------------------------


def _random_rectangle(rng, center, angle, half_w=1.0, half_h=2.0) -> Polygon:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    local = np.array(
        [(-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)]
    )
    return Polygon(local @ rot.T + np.asarray(center))


def place_obstacles(
    scenario: Scenario, path_index: int, n_obstacles: int, rng: np.random.Generator
) -> List[Polygon]:
    """Random 2 x 4 m rectangles in a corridor around the reference path.

    Placement rejects rectangles outside the field or blocking the start or
    end pose. Raises after 100 consecutive rejections.
    """
    R = scenario.reference_paths[path_index]
    field = scenario.field
    params = scenario.vehicle
    start_fp = footprint(np.array([*R.points[0], R.phis[0]]), params)
    goal_fp = footprint(np.array([*R.points[-1], R.phis[-1]]), params)
    cum = np.concatenate([[0.0], np.cumsum(R.seg_lengths)])
    total = R.total_length
    out: List[Polygon] = []
    rejects = 0
    while len(out) < n_obstacles:
        if rejects >= 100:
            raise RuntimeError("could not place obstacles after 100 rejections")
        s = rng.uniform(0.1, 0.9) * total
        j = min(np.searchsorted(cum, s, side="right") - 1, R.num_segments - 1)
        t = (s - cum[j]) / R.seg_lengths[j]
        base = R.points[j] + t * (R.points[j + 1] - R.points[j])
        tangent = (R.points[j + 1] - R.points[j]) / R.seg_lengths[j]
        normal = np.array([-tangent[1], tangent[0]])
        center = base + rng.uniform(-5.0, 5.0) * normal
        angle = rng.uniform(0.0, math.pi)
        rect = _random_rectangle(rng, center, angle)
        if not footprint_inside_field(rect, field):
            rejects += 1
            continue
        if polygon_polygon_collides(rect, start_fp) or polygon_polygon_collides(rect, goal_fp):
            rejects += 1
            continue
        out.append(rect)
        rejects = 0
    return out


def random_obstacle_trial(
    scenario: Scenario,
    path_index: int,
    n_obstacles: int,
    seed: int,
    config: SimulationConfig = SimulationConfig(),
) -> Tuple[RunReport, List[TraceRow]]:
    """One seeded avoidance trial: place obstacles, then run closed loop."""
    rng = rng_stream(seed, f"obstacles-{path_index}-{n_obstacles}")
    obstacles = place_obstacles(scenario, path_index, n_obstacles, rng)
    trial = Scenario(
        field=scenario.field,
        reference_paths=scenario.reference_paths,
        vehicle=scenario.vehicle,
        obstacles=obstacles,
        rng_seed=seed,
    )
    return simulate_closed_loop(trial, path_index, "hybrid", config)


# --- artifact output ----------------------------------------------------------------

TRACE_HEADER = "t,x,y,theta,v,delta,a,mode,g_min"


def write_trace(rows: Sequence[TraceRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.t:.9g},{r.x:.9g},{r.y:.9g},{r.theta:.9g},{r.v:.9g},"
                f"{r.delta:.9g},{r.a:.9g},{r.mode},{r.g_min:.9g}\n"
            )


def write_report(report: RunReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
