"""Online obstacle handling: detect, window, replan locally, splice.

Obstacles are unknown until every vertex has been inside the vehicle's
fan-shaped sensing region at least once (cumulatively over time). When a
newly known obstacle collides with the remaining trajectory, the colliding
index range is widened by a few states on each side and that slice is
replanned with two changes to the nominal search: the analytic expansion
fires as soon as a straight line to the slice goal clears the obstacles,
and in-search collision checks combine the rear-axle center against
inflated shapes with a batched footprint test against the raw shapes. The
candidate is then validated with a full footprint sweep; whatever still
collides gets inflated further and the search reruns. The final patch
replaces the windowed slice of the original trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    FootprintChecker,
    Polygon,
    Polyline,
    SensorFan,
    fan_contains,
    footprint_corners_batch,
    footprint_inside_field,
    inflate_polygon,
    polygon_polygon_collides,
    segment_intersects_polygon,
)
from .planner import PlanNotFound, PlannerConfig, _HybridSearch
from .reeds_shepp import RsPath, rs_sample
from .trajectory import Trajectory
from .vehicle import VehicleParams, footprint, sample_primitive


@dataclass(frozen=True)
class ReplannerConfig:
    expand: int = 5
    initial_inflation: float = 0.2
    inflation_increment: float = 0.1
    max_inflation_rounds: int = 10

    def __post_init__(self):
        if self.expand < 0:
            raise ValueError("expand must be non-negative")
        if self.initial_inflation < 0 or self.inflation_increment <= 0:
            raise ValueError("inflation widths must be positive")
        if self.max_inflation_rounds < 1:
            raise ValueError("need at least one inflation round")


# --- detection ---------------------------------------------------------------


@dataclass(frozen=True)
class DetectionState:
    """Which obstacles the vehicle knows about, plus partial vertex sightings.

    ``seen_masks[i]`` marks which vertices of ``undetected[i]`` have ever
    been inside the sensor fan; an obstacle moves to ``known`` once its mask
    is all True. The known set never shrinks.
    """

    known: Tuple[Polygon, ...] = ()
    undetected: Tuple[Polygon, ...] = ()
    seen_masks: Tuple[Tuple[bool, ...], ...] = ()

    @staticmethod
    def fresh(obstacles: Sequence[Polygon]) -> "DetectionState":
        obstacles = tuple(obstacles)
        masks = tuple(tuple(False for _ in ob.vertices) for ob in obstacles)
        return DetectionState(known=(), undetected=obstacles, seen_masks=masks)


def update_detection(state: DetectionState, pose, fan: SensorFan) -> DetectionState:
    """Fold one sensing step into the detection state.

    Vertex visibility is cumulative: a vertex once seen stays seen even if
    the fan sweeps away before the rest of the obstacle comes into view.
    """
    known = list(state.known)
    undetected: List[Polygon] = []
    masks: List[Tuple[bool, ...]] = []
    for ob, mask in zip(state.undetected, state.seen_masks):
        new_mask = tuple(
            seen or fan_contains(pose, fan, v) for seen, v in zip(mask, ob.vertices)
        )
        if all(new_mask):
            known.append(ob)
        else:
            undetected.append(ob)
            masks.append(new_mask)
    return DetectionState(
        known=tuple(known), undetected=tuple(undetected), seen_masks=tuple(masks)
    )


# --- collision window --------------------------------------------------------


@dataclass(frozen=True)
class ReplanWindow:
    first_bad: int
    last_bad: int
    expand: int
    start_index: int
    end_index: int
    reference_slice: Polyline
    start_state: np.ndarray  # (4,)
    end_state: np.ndarray  # (4,)
    entry_speed: float  # signed speed arriving at start_index
    start_gear: int


def _footprint_collides(pose, obstacles: Sequence[Polygon], params: VehicleParams) -> bool:
    fp = footprint(pose, params)
    return any(polygon_polygon_collides(fp, ob) for ob in obstacles)


def _slice_polyline(traj: Trajectory, i0: int, i1: int) -> Polyline:
    pts = traj.positions[i0 : i1 + 1]
    keep = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - keep[-1])) > 1e-9:
            keep.append(p)
    if len(keep) < 2:
        keep.append(keep[-1] + np.array([1e-6, 0.0]))
    return Polyline(keep)


def collision_window(
    traj: Trajectory,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    expand: int = 5,
    from_index: int = 0,
) -> Optional[ReplanWindow]:
    """Smallest colliding index range, widened by ``expand`` on each side.

    Only states at or after ``from_index`` are examined (states already
    behind the vehicle cannot be replanned). The widened endpoints are
    pushed further out until their footprints are collision-free, clamped
    to the trajectory bounds. Returns None when nothing collides.
    """
    if not obstacles:
        return None
    n = traj.num_states
    bad = [
        i
        for i in range(from_index, n)
        if _footprint_collides(traj.states[i, :3], obstacles, params)
    ]
    if not bad:
        return None
    first_bad, last_bad = bad[0], bad[-1]
    i0 = max(first_bad - expand, from_index)
    while i0 > from_index and _footprint_collides(traj.states[i0, :3], obstacles, params):
        i0 -= 1
    i1 = min(last_bad + expand, n - 1)
    while i1 < n - 1 and _footprint_collides(traj.states[i1, :3], obstacles, params):
        i1 += 1
    entry_speed = float(traj.states[i0 - 1, 3]) if i0 > 0 else 0.0
    return ReplanWindow(
        first_bad=first_bad,
        last_bad=last_bad,
        expand=expand,
        start_index=i0,
        end_index=i1,
        reference_slice=_slice_polyline(traj, i0, i1),
        start_state=traj.states[i0].copy(),
        end_state=traj.states[i1].copy(),
        entry_speed=entry_speed,
        start_gear=int(traj.gears[max(i0 - 1, 0)]),
    )


# --- replanning --------------------------------------------------------------


class _InflatedChecks:
    """Fast rear-axle-center feasibility against inflated shapes.

    One width per obstacle plus one for the field boundary; widths only
    grow, so the inflation loop terminates.
    """

    def __init__(self, field: Polygon, obstacles: Sequence[Polygon], initial: float):
        self.field = field
        self.obstacles = list(obstacles)
        self.boundary = Polyline(np.vstack([field.vertices, field.vertices[:1]]))
        self.field_width = initial
        self.obstacle_widths = [initial] * len(self.obstacles)
        self._rebuild()

    def _rebuild(self):
        self.inflated = [
            inflate_polygon(ob, w) for ob, w in zip(self.obstacles, self.obstacle_widths)
        ]

    def bump_field(self, increment: float):
        self.field_width += increment

    def bump_obstacle(self, index: int, increment: float):
        self.obstacle_widths[index] += increment
        self._rebuild()

    def centers_valid(self, poses: np.ndarray) -> bool:
        pts = np.asarray(poses)[:, :2]
        if not np.all(self.field.contains_points(pts)):
            return False
        if self.field_width > 0.0:
            if np.min(self.boundary.distances_to_many(pts)) < self.field_width:
                return False
        for ob in self.inflated:
            if np.any(ob.contains_points(pts)):
                return False
        return True


def replan(
    window: ReplanWindow,
    field: Polygon,
    known_obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: PlannerConfig,
    rconfig: ReplannerConfig = ReplannerConfig(),
) -> Trajectory:
    """Replan the windowed slice around the known obstacles.

    The search differs from nominal smoothing in two ways: the analytic
    expansion fires once the straight line from a node to the slice goal
    clears every obstacle, and in-search collision checks require both a
    clear footprint against the raw shapes and the rear-axle center clear
    of the inflated field boundary and obstacles.
    Each candidate is validated with the full footprint; on failure the
    offending shape is inflated one increment and the search reruns, up to
    ``max_inflation_rounds``. Raises PlanNotFound when the budget runs out.
    """
    obstacles = list(known_obstacles)
    start_pose = window.start_state[:3]
    goal_pose = window.end_state[:3]
    # Detours need heading-aware duplicate detection: with the plain cell key,
    # gradually swerving nodes land in cells already held by cheaper
    # straight-ahead nodes that cannot pass the obstacle, and the search
    # degenerates. Four bins keep the swerve corridor open without blowing
    # up the node count.
    if config.heading_bins <= 0:
        config = replace(config, heading_bins=4)
    checks = _InflatedChecks(field, obstacles, rconfig.initial_inflation)
    # The inflated-center test alone lets poses point straight at an
    # obstacle with the body poking into it; catching that only in the
    # validation stage forces huge inflations and deep, slow detours. A
    # batched footprint test against the raw shapes prunes such poses in
    # the search itself, so validation almost always passes first try.
    w = params.body_width / 2.0
    local_corners = np.array(
        [
            [params.front_length, -w],
            [params.front_length, w],
            [-params.rear_overhang, w],
            [-params.rear_overhang, -w],
        ]
    )
    checker = FootprintChecker(field, obstacles)

    def trigger(pose: np.ndarray) -> bool:
        return not any(
            segment_intersects_polygon(pose[:2], goal_pose[:2], ob) for ob in obstacles
        )

    def motion_valid(poses: np.ndarray) -> bool:
        poses = np.atleast_2d(poses)
        if not checks.centers_valid(poses):
            return False
        return checker.corners_valid(footprint_corners_batch(poses, local_corners))

    def rs_valid(path: RsPath, pose: np.ndarray) -> bool:
        return motion_valid(rs_sample(path, pose, config.collision_spacing))

    for _ in range(rconfig.max_inflation_rounds):
        search = _HybridSearch(
            window.reference_slice,
            field,
            obstacles,
            params,
            config,
            start_pose,
            goal_pose,
            start_gear=window.start_gear,
            analytic_trigger=trigger,
            motion_valid=motion_valid,
            rs_valid=rs_valid,
        )
        # Search failure means the inflated free space is already too tight;
        # further inflation cannot help, so the failure propagates.
        chain, tail = search.run()
        offenders = _full_footprint_offenders(
            search, chain, tail, field, obstacles, params, config
        )
        if offenders is None:
            return search.assemble(chain, tail, entry_speed=window.entry_speed)
        field_need, obstacle_needs = offenders
        # Bumping to just past the worst offending center distance excludes
        # every currently colliding center in one round; the fixed increment
        # alone cannot keep up when the footprint pokes far ahead of the
        # rear axle.
        if field_need is not None:
            checks.bump_field(
                max(rconfig.inflation_increment, field_need - checks.field_width)
                + 1e-6
            )
        for idx, need in obstacle_needs.items():
            checks.bump_obstacle(
                idx,
                max(rconfig.inflation_increment, need - checks.obstacle_widths[idx])
                + 1e-6,
            )
    raise PlanNotFound(
        f"no collision-free patch within {rconfig.max_inflation_rounds} inflation rounds"
    )


def _full_footprint_offenders(
    search: _HybridSearch,
    chain,
    tail: RsPath,
    field: Polygon,
    obstacles: Sequence[Polygon],
    params: VehicleParams,
    config: PlannerConfig,
):
    """None when the candidate sweep is collision-free, else what it hit.

    For each offending shape the return value carries the largest
    rear-axle-center clearance among the colliding poses; inflating past
    that clearance rules those centers out on the next round.
    """
    poses = _candidate_sweep(search, chain, tail, config.collision_spacing)
    field_need: Optional[float] = None
    obstacle_needs: dict = {}
    for pose in poses:
        fp = footprint(pose, params)
        center = pose[:2]
        if not footprint_inside_field(fp, field):
            d = field.boundary_distance(center)
            field_need = d if field_need is None else max(field_need, d)
        for i, ob in enumerate(obstacles):
            if polygon_polygon_collides(fp, ob):
                d = ob.boundary_distance(center)
                obstacle_needs[i] = max(obstacle_needs.get(i, 0.0), d)
    if field_need is None and not obstacle_needs:
        return None
    return field_need, obstacle_needs


def _candidate_sweep(search: _HybridSearch, chain, tail: RsPath, spacing: float):
    poses = [chain[0].pose]
    for node in chain[1:]:
        sampled = sample_primitive(node.parent.pose, node.via, spacing)
        poses.extend(sampled[1:])
    if tail.total_length > 1e-12:
        sampled = rs_sample(tail, chain[-1].pose, spacing)
        poses.extend(sampled[1:])
    return np.asarray(poses)


# --- splicing ----------------------------------------------------------------


def splice(traj: Trajectory, window: ReplanWindow, patch: Trajectory) -> Trajectory:
    """Replace the windowed slice with the patch; indices renumber.

    The patch endpoints must match the window endpoint poses within 1e-6.
    States outside the window are preserved bit-exactly; the patch's last
    state takes over the original end state's outgoing motion so tracking
    continues seamlessly past the rejoin point.
    """
    i0, i1 = window.start_index, window.end_index
    for patch_pose, want, label in (
        (patch.states[0, :3], traj.states[i0, :3], "start"),
        (patch.states[-1, :3], traj.states[i1, :3], "end"),
    ):
        gap = patch_pose - want
        gap[2] = (gap[2] + np.pi) % (2.0 * np.pi) - np.pi
        if not np.all(np.abs(gap) <= 1e-6):
            raise ValueError(f"patch {label} does not match the window {label} state")
    patch_states = patch.states.copy()
    patch_curv = patch.curvatures.copy()
    patch_gears = patch.gears.copy()
    # Boundary poses and the outgoing motion at the rejoin point belong to
    # the original trajectory; this keeps headings free of 2*pi offsets.
    patch_states[0, :3] = traj.states[i0, :3]
    patch_states[-1, :3] = traj.states[i1, :3]
    patch_states[-1, 3] = traj.states[i1, 3]
    patch_curv[-1] = traj.curvatures[i1]
    patch_gears[-1] = traj.gears[i1]
    states = np.vstack([traj.states[:i0], patch_states, traj.states[i1 + 1 :]])
    curv = np.concatenate([traj.curvatures[:i0], patch_curv, traj.curvatures[i1 + 1 :]])
    gears = np.concatenate([traj.gears[:i0], patch_gears, traj.gears[i1 + 1 :]])
    return Trajectory(states, curv, gears, traj.dt)


# --- one-call orchestration ---------------------------------------------------


def sense_and_replan(
    traj: Trajectory,
    k: int,
    pose,
    detection: DetectionState,
    fan: SensorFan,
    field: Polygon,
    params: VehicleParams,
    config: PlannerConfig,
    rconfig: ReplannerConfig = ReplannerConfig(),
) -> Tuple[Trajectory, DetectionState, bool]:
    """One sensing step, replanning and splicing if newly needed.

    Returns the (possibly spliced) trajectory, the updated detection state
    and whether a replan happened. Raises PlanNotFound when avoidance is
    impossible within the inflation budget.
    """
    n_known = len(detection.known)
    detection = update_detection(detection, pose, fan)
    if len(detection.known) == n_known:
        return traj, detection, False
    window = collision_window(
        traj, detection.known, params, rconfig.expand, from_index=min(k + 1, traj.num_states - 1)
    )
    if window is None:
        return traj, detection, False
    patch = replan(window, field, detection.known, params, config, rconfig)
    return splice(traj, window, patch), detection, True
