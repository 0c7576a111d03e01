"""Deviation-aware hybrid A* that smooths a polyline into a feasible trajectory.

The search expands bounded-curvature motion primitives on a coarse grid
(one forward and one reverse slot per cell), scores nodes by accumulated
deviation from the reference plus the predicted deviation of a Reeds-Shepp
tail to the goal, and finishes with an analytic Reeds-Shepp expansion once a
node is close enough to the goal along the reference. Two pruning rules cut
the open set once a tentative goal node exists.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    FootprintChecker,
    Polygon,
    Polyline,
    as_point,
    footprint_corners_batch,
    footprint_inside_field,
    polygon_polygon_collides,
)
from .reeds_shepp import (
    RsPath,
    _advance_world,
    rs_sample,
    rs_sample_with_motion,
    rs_shortest,
)
from .trajectory import Trajectory, concatenate
from .vehicle import (
    FORWARD,
    REVERSE,
    MotionPrimitive,
    VehicleParams,
    footprint,
    primitive_set,
    sample_primitive,
)


class PlanNotFound(Exception):
    """Raised when the open set empties or the expansion budget is exhausted."""


@dataclass(frozen=True)
class PlannerConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    grid_cell: float = 0.5
    d0: Optional[float] = None  # default: 3 * minimum turning radius
    n_curv: int = 5
    v_r: float = 2.0
    dt: float = 0.5
    arc_length: Optional[float] = None  # default: v_r * dt
    heuristic_spacing: Optional[float] = None  # default: arc_length
    collision_spacing: float = 0.2
    max_expansions: int = 200_000
    allow_reverse: bool = True
    enable_pruning: bool = True
    heading_bins: int = 0  # opt-in extra dedup key; 0 keeps the plain cell key
    max_piece_length: float = 60.0
    taper_speed: bool = True  # ramp speed to zero into and out of gear switches

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("cost weights must be non-negative")
        if self.alpha == 0 and self.beta == 0 and self.gamma == 0:
            raise ValueError("at least one cost weight must be positive")
        if self.grid_cell <= 0:
            raise ValueError("grid cell must be positive")
        if self.d0 is not None and self.d0 <= 0:
            raise ValueError("d0 must be positive")

    def effective_arc_length(self) -> float:
        return self.arc_length if self.arc_length is not None else self.v_r * self.dt

    def effective_d0(self, params: VehicleParams) -> float:
        return self.d0 if self.d0 is not None else 3.0 * params.min_turn_radius

    def effective_heuristic_spacing(self) -> float:
        return (
            self.heuristic_spacing
            if self.heuristic_spacing is not None
            else self.effective_arc_length()
        )


@dataclass
class SearchNode:
    pose: np.ndarray  # (3,)
    gear: int
    e_cost_acc: float
    path_len_acc: float
    e_pred: float
    rs_tail: Optional[RsPath]
    f: float
    parent: Optional["SearchNode"]
    via: Optional[MotionPrimitive]
    is_target: bool = False


# --- cost building blocks ---------------------------------------------------


def deviation_along(points: np.ndarray, R: Polyline) -> float:
    """Sum of dis(z_i, R) * ||z_i - z_{i-1}|| over a point sequence."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    d = np.diff(points, axis=0)
    steps = np.hypot(d[:, 0], d[:, 1])
    return float(R.distances_to_many(points[1:]) @ steps)


def e_cost_increment(prev_acc: float, z_prev, z_new, R: Polyline) -> float:
    z_prev = as_point(z_prev)
    z_new = as_point(z_new)
    return prev_acc + R.distance_to(z_new) * float(np.hypot(*(z_new - z_prev)))


def e_pred(pose, R: Polyline, goal, radius: float, spacing: float) -> float:
    value, _ = e_pred_with_path(pose, R, goal, radius, spacing)
    return value


def e_pred_with_path(pose, R: Polyline, goal, radius: float, spacing: float):
    path = rs_shortest(pose, goal, radius)
    if path.total_length <= 1e-12:
        return 0.0, path
    pts = rs_sample(path, pose, spacing)[:, :2]
    return deviation_along(pts, R), path


def h_value(path_len_acc: float, pose, goal, radius: float) -> float:
    return path_len_acc + rs_shortest(pose, goal, radius).total_length


def total_f(node: SearchNode, config: PlannerConfig) -> float:
    h = node.path_len_acc + (node.rs_tail.total_length if node.rs_tail else 0.0)
    return config.alpha * node.e_cost_acc + config.beta * node.e_pred + config.gamma * h


def progress_along_reference(z, R: Polyline) -> float:
    return R.progress_of(z)


@dataclass(frozen=True)
class _RunProfile:
    """Distance-vs-time law for one same-gear run ending at rest.

    Accelerates from ``v0`` to ``peak``, cruises, then brakes to zero:
    trapezoidal when the run is long enough to reach cruise speed,
    triangular otherwise. ``distance_at`` saturates at the run length for
    times past ``duration``.
    """

    length: float
    accel: float
    peak: float
    v0: float = 0.0

    @property
    def t_accel(self) -> float:
        return (self.peak - self.v0) / self.accel

    @property
    def t_brake(self) -> float:
        return self.peak / self.accel

    @property
    def duration(self) -> float:
        if self.peak <= 0.0:
            return 0.0
        a = self.accel
        s_ramps = (self.peak**2 - self.v0**2) / (2.0 * a) + self.peak**2 / (2.0 * a)
        return self.t_accel + self.t_brake + (self.length - s_ramps) / self.peak

    def distance_at(self, t: float) -> float:
        if self.peak <= 0.0 or t <= 0.0:
            return 0.0
        T = self.duration
        if t >= T:
            return self.length
        a = self.accel
        t1 = self.t_accel
        if t <= t1:
            return self.v0 * t + 0.5 * a * t * t
        if t <= T - self.t_brake:
            s1 = self.v0 * t1 + 0.5 * a * t1 * t1
            return s1 + self.peak * (t - t1)
        td = T - t
        return self.length - 0.5 * a * td * td


def _run_profile(
    length: float, accel: float, cruise: float, v0: float = 0.0
) -> _RunProfile:
    """Speed profile for a run of ``length`` starting at ``v0``, ending at rest.

    When the run is too short to brake from ``v0``, the entry speed is
    clamped to the largest value that can still stop in time.
    """
    v0 = min(v0, math.sqrt(max(2.0 * accel * length, 0.0)))
    peak = min(cruise, math.sqrt((2.0 * accel * length + v0 * v0) / 2.0))
    peak = max(peak, v0)
    return _RunProfile(length=length, accel=accel, peak=peak, v0=v0)


# --- search core -------------------------------------------------------------


class _HybridSearch:
    """One search instance; hooks let the replanner swap trigger/validity."""

    def __init__(
        self,
        reference: Polyline,
        field: Polygon,
        obstacles: Sequence[Polygon],
        params: VehicleParams,
        config: PlannerConfig,
        start_pose,
        goal_pose,
        start_gear: int = FORWARD,
        analytic_trigger: Optional[Callable[[np.ndarray], bool]] = None,
        motion_valid: Optional[Callable[[np.ndarray], bool]] = None,
        rs_valid: Optional[Callable[[RsPath, np.ndarray], bool]] = None,
    ):
        self.reference = reference
        self.field = field
        self.obstacles = list(obstacles)
        self.params = params
        self.config = config
        self.start_pose = np.asarray(start_pose, dtype=float)[:3]
        self.goal_pose = np.asarray(goal_pose, dtype=float)[:3]
        self.start_gear = start_gear
        self.radius = params.min_turn_radius
        self.spacing = config.effective_heuristic_spacing()
        self.primitives = [
            mp
            for mp in primitive_set(params, config.n_curv, config.effective_arc_length())
            if config.allow_reverse or mp.direction == FORWARD
        ]
        self._checker = FootprintChecker(field, obstacles)
        w = params.half_width
        self._local_corners = np.array(
            [
                [params.front_length, -w],
                [params.front_length, w],
                [-params.rear_overhang, w],
                [-params.rear_overhang, -w],
            ]
        )
        self._trigger = analytic_trigger or self._default_trigger
        self._motion_valid = motion_valid or self._default_motion_valid
        self._rs_valid = rs_valid or self._default_rs_valid
        self._grid: dict = {}
        self.expansions = 0

    # default hooks -----------------------------------------------------

    def _default_trigger(self, pose: np.ndarray) -> bool:
        gap = self.reference.total_length - self.reference.progress_of(pose[:2])
        return gap < self.config.effective_d0(self.params)

    def _default_motion_valid(self, poses: np.ndarray) -> bool:
        corners = footprint_corners_batch(np.asarray(poses), self._local_corners)
        return self._checker.corners_valid(corners)

    def _default_rs_valid(self, path: RsPath, start_pose: np.ndarray) -> bool:
        poses = rs_sample(path, start_pose, self.config.collision_spacing)
        return self._motion_valid(poses)

    # node construction --------------------------------------------------

    def _make_node(self, pose, gear, e_acc, len_acc, parent, via) -> SearchNode:
        ep, tail = e_pred_with_path(
            pose, self.reference, self.goal_pose, self.radius, self.spacing
        )
        node = SearchNode(
            pose=np.asarray(pose, dtype=float),
            gear=gear,
            e_cost_acc=e_acc,
            path_len_acc=len_acc,
            e_pred=ep,
            rs_tail=tail,
            f=0.0,
            parent=parent,
            via=via,
        )
        node.f = total_f(node, self.config)
        return node

    def _grid_key(self, pose: np.ndarray, gear: int):
        c = self.config.grid_cell
        key = (int(math.floor(pose[0] / c)), int(math.floor(pose[1] / c)), gear)
        if self.config.heading_bins > 0:
            b = int(pose[2] / (2.0 * math.pi) * self.config.heading_bins) % self.config.heading_bins
            key = key + (b,)
        return key

    def valid_children(self, node: SearchNode) -> List[SearchNode]:
        out = []
        for mp in self.primitives:
            poses = sample_primitive(node.pose, mp, self.config.collision_spacing)
            if not self._motion_valid(poses[1:]):
                continue
            new_pose = poses[-1]
            chord = float(np.hypot(*(new_pose[:2] - node.pose[:2])))
            e_acc = node.e_cost_acc + self.reference.distance_to(new_pose[:2]) * chord
            new_len = node.path_len_acc + chord
            if self._cell_beats_bound(new_pose, mp.direction, e_acc, new_len):
                continue
            out.append(self._make_node(new_pose, mp.direction, e_acc, new_len, node, mp))
        return out

    def _cell_beats_bound(self, pose, gear, e_acc, path_len) -> bool:
        """Skip the e_pred computation when the grid slot already wins.

        alpha*e_acc + gamma*(path_len + euclidean-to-goal) underestimates f,
        so an incumbent at or below it makes the new node redundant.
        """
        existing = self._grid.get(self._grid_key(pose, gear))
        if existing is None:
            return False
        cfg = self.config
        lb = cfg.alpha * e_acc + cfg.gamma * (
            path_len + float(np.hypot(*(self.goal_pose[:2] - pose[:2])))
        )
        return existing.f <= lb

    # main loop -----------------------------------------------------------

    def run(self) -> Tuple[List[SearchNode], RsPath]:
        cfg = self.config
        start = self._make_node(self.start_pose, self.start_gear, 0.0, 0.0, None, None)
        heap: list = []
        seq = itertools.count()
        heapq.heappush(heap, (start.f, next(seq), start))
        grid = self._grid
        grid.clear()
        grid[self._grid_key(start.pose, start.gear)] = start
        target: Optional[SearchNode] = None

        while heap:
            _, _, node = heapq.heappop(heap)
            if node.is_target:
                if node is target:
                    return self._backtrack(node), node.rs_tail
                continue  # superseded target
            if grid.get(self._grid_key(node.pose, node.gear)) is not node:
                continue  # superseded by a cheaper node in the same slot
            self.expansions += 1
            if self.expansions > cfg.max_expansions:
                raise PlanNotFound("expansion budget exhausted")

            in_vicinity = self._trigger(node.pose)
            if in_vicinity:
                tail = node.rs_tail
                if tail is not None and self._rs_valid(tail, node.pose):
                    if target is None or node.f < target.f:
                        tnode = SearchNode(
                            pose=self.goal_pose.copy(),
                            gear=node.gear,
                            e_cost_acc=node.e_cost_acc,
                            path_len_acc=node.path_len_acc,
                            e_pred=node.e_pred,
                            rs_tail=tail,
                            f=node.f,
                            parent=node,
                            via=None,
                            is_target=True,
                        )
                        target = tnode
                        heapq.heappush(heap, (tnode.f, next(seq), tnode))
            if target is not None and cfg.enable_pruning:
                if target.f <= node.f:
                    continue  # Pruning 1: low-potential branch
                if not in_vicinity:
                    continue  # Pruning 2: distant branch once a goal node exists

            for child in self.valid_children(node):
                key = self._grid_key(child.pose, child.gear)
                existing = grid.get(key)
                if existing is not None and existing.f <= child.f:
                    continue
                grid[key] = child
                heapq.heappush(heap, (child.f, next(seq), child))

        raise PlanNotFound("open set exhausted")

    def _backtrack(self, target: SearchNode) -> List[SearchNode]:
        chain: List[SearchNode] = []
        node = target.parent
        while node is not None:
            chain.append(node)
            node = node.parent
        chain.reverse()
        return chain

    # trajectory assembly ---------------------------------------------------

    def assemble(
        self, chain: List[SearchNode], tail: RsPath, entry_speed: float = 0.0
    ) -> Trajectory:
        if self.config.taper_speed:
            return self._assemble_retimed(chain, tail, entry_speed)
        return self._assemble_constant(chain, tail)

    def _assemble_constant(self, chain: List[SearchNode], tail: RsPath) -> Trajectory:
        """Constant-speed assembly: one state per primitive end pose."""
        cfg = self.config
        poses = [chain[0].pose]
        curv: List[float] = []
        gear: List[int] = []
        for node in chain[1:]:
            poses.append(node.pose)
            curv.append(node.via.curvature)
            gear.append(node.via.direction)
        if tail.total_length > 1e-12:
            tposes, tcurv, tgear = rs_sample_with_motion(
                tail, chain[-1].pose, cfg.effective_arc_length()
            )
            for i in range(1, len(tposes)):
                poses.append(tposes[i])
                curv.append(float(tcurv[i - 1]))
                gear.append(int(tgear[i - 1]))
        # Leaving-motion attributes; final state repeats the last gear.
        curv.append(0.0)
        gear.append(gear[-1] if gear else FORWARD)
        poses = np.asarray(poses)
        gears = np.asarray(gear, dtype=int)
        v = gears * cfg.v_r
        states = np.column_stack([poses, v])
        return Trajectory(states, np.asarray(curv), gears, cfg.dt)

    def _motion_chain(self, chain: List[SearchNode], tail: RsPath):
        """Flatten the solution into (curvature, gear, arc length) pieces."""
        arc = self.config.effective_arc_length()
        motions = []
        for node in chain[1:]:
            motions.append((node.via.curvature, node.via.direction, arc))
        if tail.total_length > 1e-12:
            for seg in tail.segments:
                if seg.length <= 1e-12:
                    continue
                curv = float(seg.steer) / tail.turning_radius
                motions.append((curv, seg.gear, seg.length))
        return motions

    def _assemble_retimed(
        self, chain: List[SearchNode], tail: RsPath, entry_speed: float = 0.0
    ) -> Trajectory:
        """Resample the geometric path with speed ramps at gear switches.

        Each maximal same-gear run gets a trapezoidal (or triangular, when
        short) speed profile that ends at zero, so gear switches and the
        trajectory end are reachable under the acceleration limit. A signed
        ``entry_speed`` lets the first run start at a matching nonzero speed
        (used when a patch joins a trajectory already in motion). Sampling
        stays on the dt grid: v_n is the average speed over [t_n, t_n+dt],
        which keeps the speed sequence consistent with the stored states.
        """
        cfg = self.config
        dt = cfg.dt
        motions = self._motion_chain(chain, tail)
        start_pose = chain[0].pose
        if not motions:
            state = np.array([[start_pose[0], start_pose[1], start_pose[2], 0.0]])
            return Trajectory(state, np.zeros(1), np.array([chain[0].gear]), dt)

        lengths = np.array([m[2] for m in motions])
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        seg_curv = np.array([m[0] for m in motions])
        seg_gear = np.array([m[1] for m in motions], dtype=int)
        seg_start_poses = [np.asarray(start_pose, dtype=float)[:3]]
        for (curv, gear, length) in motions:
            seg_start_poses.append(
                _advance_world(seg_start_poses[-1], curv, gear * length)
            )

        # Maximal same-gear runs, each padded to a whole number of dt steps
        # (the vehicle simply rests at the cusp until the next grid time).
        profiles = []  # (t_start, s_start, profile)
        t0 = 0.0
        i = 0
        v0 = abs(entry_speed) if entry_speed * seg_gear[0] > 0.0 else 0.0
        while i < len(motions):
            j = i
            while j + 1 < len(motions) and seg_gear[j + 1] == seg_gear[i]:
                j += 1
            run_len = cum[j + 1] - cum[i]
            prof = _run_profile(run_len, self.params.max_accel, cfg.v_r, v0)
            profiles.append((t0, cum[i], prof))
            t0 += math.ceil(prof.duration / dt - 1e-9) * dt
            i = j + 1
            v0 = 0.0
        total_time = t0
        total_len = cum[-1]

        def s_at(t: float) -> float:
            for t_start, s_start, prof in reversed(profiles):
                if t >= t_start - 1e-12:
                    return s_start + prof.distance_at(t - t_start)
            return 0.0

        def pose_at(s: float) -> np.ndarray:
            k = min(np.searchsorted(cum, s, side="right") - 1, len(motions) - 1)
            k = max(k, 0)
            return _advance_world(
                seg_start_poses[k], seg_curv[k], seg_gear[k] * (s - cum[k])
            )

        n_steps = int(round(total_time / dt))
        tgrid = np.arange(n_steps + 1) * dt
        s_vals = np.array([s_at(t) for t in tgrid])
        s_vals[-1] = total_len
        poses = np.asarray([pose_at(s) for s in s_vals])

        curv_out = np.zeros(n_steps + 1)
        gear_out = np.full(n_steps + 1, seg_gear[-1], dtype=int)
        v = np.zeros(n_steps + 1)
        for n in range(n_steps):
            s_mid = 0.5 * (s_vals[n] + s_vals[n + 1])
            k = min(np.searchsorted(cum, s_mid, side="right") - 1, len(motions) - 1)
            k = max(k, 0)
            gear_out[n] = seg_gear[k]
            v[n] = (s_vals[n + 1] - s_vals[n]) / dt * seg_gear[k]
            curv_out[n] = seg_curv[k]
        states = np.column_stack([poses, v])
        return Trajectory(states, curv_out, gear_out, dt)


# --- public operations -------------------------------------------------------


def valid_children(
    node: SearchNode,
    reference: Polyline,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: PlannerConfig,
    goal_pose,
) -> List[SearchNode]:
    search = _HybridSearch(
        reference, field, obstacles, params, config, node.pose, goal_pose, node.gear
    )
    return search.valid_children(node)


def plan(
    reference: Polyline,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: PlannerConfig,
    start_pose=None,
    start_gear: int = FORWARD,
) -> Trajectory:
    """Smooth one reference polyline into a feasible timed trajectory.

    The trajectory starts at (r_0, phi_1) (or ``start_pose`` when chaining
    pieces) and ends at (r_m, phi_m). Raises PlanNotFound when no
    collision-free trajectory exists within the expansion budget.
    """
    if start_pose is None:
        start_pose = np.array(
            [reference.points[0, 0], reference.points[0, 1], reference.phis[0]]
        )
    goal_pose = np.array(
        [reference.points[-1, 0], reference.points[-1, 1], reference.phis[-1]]
    )
    for pose, label in ((start_pose, "start"), (goal_pose, "goal")):
        fp = footprint(pose, params)
        if not footprint_inside_field(fp, field):
            raise ValueError(f"{label} footprint is outside the field")
        if any(polygon_polygon_collides(fp, o) for o in obstacles):
            raise ValueError(f"{label} footprint collides with an obstacle")
    search = _HybridSearch(
        reference, field, obstacles, params, config, start_pose, goal_pose, start_gear
    )
    chain, tail = search.run()
    return search.assemble(chain, tail)


def split_long_reference(R: Polyline, max_len: float) -> List[Polyline]:
    """Contiguous sub-polylines each at most ``max_len`` long.

    Splits at vertices when possible; a single over-long segment is cut at
    ``max_len`` increments (geometry is unchanged).
    """
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    if R.total_length <= max_len:
        return [R]
    pieces: List[List[np.ndarray]] = []
    current: List[np.ndarray] = [R.points[0]]
    acc = 0.0
    for j in range(R.num_segments):
        seg_len = R.seg_lengths[j]
        a = R.points[j]
        b = R.points[j + 1]
        direction = (b - a) / seg_len
        covered = 0.0
        while seg_len - covered > max_len - acc + 1e-12:
            cut = covered + (max_len - acc)
            p = a + cut * direction
            current.append(p)
            pieces.append(current)
            current = [p]
            covered = cut
            acc = 0.0
        current.append(b)
        acc += seg_len - covered
        if acc >= max_len - 1e-12 and j < R.num_segments - 1:
            pieces.append(current)
            current = [b]
            acc = 0.0
    if len(current) >= 2:
        pieces.append(current)
    return [Polyline(p) for p in pieces]


def plan_reference(
    reference: Polyline,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: PlannerConfig,
) -> Trajectory:
    """Plan a possibly long reference by splitting and chaining pieces."""
    pieces = split_long_reference(reference, config.max_piece_length)
    parts = []
    start_pose = None
    start_gear = FORWARD
    for piece in pieces:
        traj = plan(piece, field, obstacles, params, config, start_pose, start_gear)
        parts.append(traj)
        start_pose = traj.states[-1, :3]
        start_gear = int(traj.gears[-1])
    return concatenate(parts) if len(parts) > 1 else parts[0]
