"""Planar geometry for field-bounded vehicle planning.

Polygons and polylines are immutable after construction and every operation
here is a pure function, so values can be shared freely across threads.
Geometric predicates use an absolute tolerance of ``GEOM_EPS`` meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

GEOM_EPS = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


def as_point(p) -> np.ndarray:
    """Coerce a Point2 / tuple / array into a finite (2,) float array."""
    a = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinates: {p!r}")
    return a


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def point_segment_distance(z, a, b) -> float:
    """Euclidean distance from point z to the closed segment [a, b]."""
    z = as_point(z)
    a = as_point(a)
    b = as_point(b)
    d = b - a
    L2 = float(d @ d)
    if L2 <= GEOM_EPS ** 2:
        raise ValueError("degenerate segment")
    t = float(np.clip((z - a) @ d / L2, 0.0, 1.0))
    return float(np.hypot(*(z - (a + t * d))))


def _points_segments_distance(zs: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All pairwise distances between points zs (n,2) and segments a->b (m,2).

    Returns an (n, m) array.
    """
    d = b - a                                   # (m,2)
    L2 = np.einsum("ij,ij->i", d, d)            # (m,)
    rel = zs[:, None, :] - a[None, :, :]        # (n,m,2)
    t = np.einsum("nmj,mj->nm", rel, d) / L2
    np.clip(t, 0.0, 1.0, out=t)
    closest = a[None, :, :] + t[..., None] * d[None, :, :]
    diff = zs[:, None, :] - closest
    return np.sqrt(np.einsum("nmj,nmj->nm", diff, diff))


class Polyline:
    """Ordered polyline with derived per-segment orientations in [0, 2pi)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("polyline needs at least 2 planar points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline coordinates must be finite")
        d = np.diff(pts, axis=0)
        seg_len = np.hypot(d[:, 0], d[:, 1])
        if np.any(seg_len <= GEOM_EPS):
            raise ValueError("consecutive polyline points must be distinct")
        self.points = pts
        self.points.setflags(write=False)
        self.seg_lengths = seg_len
        self.phis = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * np.pi)
        self.cum_lengths = np.concatenate([[0.0], np.cumsum(seg_len)])
        self._a = pts[:-1]
        self._b = pts[1:]

    @property
    def total_length(self) -> float:
        return float(self.cum_lengths[-1])

    @property
    def num_segments(self) -> int:
        return len(self.seg_lengths)

    def distance_to(self, z) -> float:
        """Minimum distance from z over all polyline segments."""
        return float(self.distances_to_many(as_point(z)[None, :])[0])

    def distances_to_many(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=float).reshape(-1, 2)
        return _points_segments_distance(zs, self._a, self._b).min(axis=1)

    def progress_of(self, z) -> float:
        """Arc length from the first vertex to the projection of z."""
        z = as_point(z)
        d = self._b - self._a
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", z[None, :] - self._a, d) / L2, 0.0, 1.0)
        closest = self._a + t[:, None] * d
        dist = np.hypot(*(z[None, :] - closest).T)
        j = int(np.argmin(dist))
        return float(self.cum_lengths[j] + t[j] * self.seg_lengths[j])


def dist_to_polyline(z, R: Polyline) -> float:
    return R.distance_to(z)


def _segments_properly_cross(p1, p2, q1, q2, eps=GEOM_EPS) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    )


def _on_segment(p, a, b, eps) -> bool:
    if abs(_cross(a, b, p)) > eps * max(1.0, float(np.hypot(*(b - a)))):
        return False
    return (
        min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps
    )


def _segments_touch_or_cross(p1, p2, q1, q2, eps=GEOM_EPS) -> bool:
    if _segments_properly_cross(p1, p2, q1, q2, eps):
        return True
    return (
        _on_segment(q1, p1, p2, eps)
        or _on_segment(q2, p1, p2, eps)
        or _on_segment(p1, q1, q2, eps)
        or _on_segment(p2, q1, q2, eps)
    )


class Polygon:
    """Simple polygon, normalized counterclockwise at construction."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon coordinates must be finite")
        closed = np.vstack([v, v[:1]])
        seg = np.diff(closed, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= GEOM_EPS):
            raise ValueError("consecutive polygon vertices must be distinct")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if abs(area2) <= GEOM_EPS:
            raise ValueError("degenerate polygon (zero area)")
        if area2 < 0.0:
            v = v[::-1].copy()
        self.vertices = v
        self.vertices.setflags(write=False)
        self._area = abs(area2) / 2.0
        self._edges = (self.vertices, np.vstack([v[1:], v[:1]]))
        self._check_simple()

    def _check_simple(self):
        v = self.vertices
        n = len(v)
        for i in range(n):
            a1, a2 = v[i], v[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                b1, b2 = v[j], v[(j + 1) % n]
                if _segments_touch_or_cross(a1, a2, b1, b2):
                    raise ValueError("polygon is self-intersecting")

    @property
    def area(self) -> float:
        return self._area

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def num_edges(self) -> int:
        return len(self.vertices)

    def edge(self, i: int):
        v = self.vertices
        return v[i % len(v)], v[(i + 1) % len(v)]

    def edge_arrays(self):
        """(starts, ends) arrays of all edges, each (n, 2)."""
        return self._edges

    @property
    def is_convex(self) -> bool:
        v = self.vertices
        n = len(v)
        for i in range(n):
            if _cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) < -GEOM_EPS:
                return False
        return True

    def contains_point(self, q, tol: float = GEOM_EPS) -> bool:
        """Boundary-inclusive containment test (ray casting + boundary band)."""
        q = as_point(q)
        if self.boundary_distance(q) <= tol:
            return True
        return self._strictly_inside(q)

    def _strictly_inside(self, q) -> bool:
        v = self.vertices
        n = len(v)
        inside = False
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            if (yi > q[1]) != (yj > q[1]) and q[0] < (xj - xi) * (q[1] - yi) / (yj - yi) + xi:
                inside = not inside
            j = i
        return inside

    def contains_points(self, qs: np.ndarray, tol: float = GEOM_EPS) -> np.ndarray:
        return _points_in_polygon_batch(qs, self, tol)

    def boundary_distance(self, q) -> float:
        q = as_point(q)
        a, b = self.edge_arrays()
        return float(_points_segments_distance(q[None, :], a, b).min())

    def signed_distance_to_point(self, q) -> float:
        """Positive inside, negative outside; magnitude = boundary distance."""
        q = as_point(q)
        d = self.boundary_distance(q)
        return d if self._strictly_inside(q) else -d


@dataclass(frozen=True)
class SeparatorResult:
    """Signed distance between convex shapes with witness points.

    ``distance`` > 0 iff the shapes are disjoint; < 0 means penetration depth
    (negated); 0 on touching contact. ``normal`` is a unit vector satisfying
    sgn(d) * (p_on_a - p_on_b) / ||p_on_a - p_on_b|| when the witnesses are
    distinct.
    """

    distance: float
    point_on_a: np.ndarray
    point_on_b: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class SensorFan:
    """Fan-shaped sensing region: range in meters, fov in radians within [0, pi]."""

    range_m: float
    fov: float

    def __post_init__(self):
        if not self.range_m > 0.0:
            raise ValueError("sensor range must be positive")
        if not 0.0 <= self.fov <= math.pi:
            raise ValueError("fov must lie in [0, pi]")


def fan_contains(pose, fan: SensorFan, q) -> bool:
    """True iff q lies within the fan anchored at pose=(x, y, heading)."""
    pose = np.asarray(pose, dtype=float).reshape(3)
    q = as_point(q)
    rel = q - pose[:2]
    r = float(np.hypot(*rel))
    if r > fan.range_m + GEOM_EPS:
        return False
    if r <= GEOM_EPS:
        return True
    bearing = math.atan2(rel[1], rel[0])
    off = (bearing - pose[2] + math.pi) % (2.0 * math.pi) - math.pi
    return abs(off) <= fan.fov / 2.0 + GEOM_EPS


# ---------------------------------------------------------------------------
# GJK / EPA signed distance between convex point sets
# ---------------------------------------------------------------------------


def _support_idx(verts: np.ndarray, d: np.ndarray) -> int:
    return int(np.argmax(verts @ d))


def _closest_on_simplex(simplex):
    """Closest point to the origin on a 1-3 point simplex.

    Returns (closest, lambdas, keep) where keep indexes the supporting subset.
    For a triangle strictly containing the origin, closest is the origin and
    keep covers all three points.
    """
    pts = [s[0] for s in simplex]
    if len(pts) == 1:
        return pts[0], [1.0], [0]
    if len(pts) == 2:
        a, b = pts
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom <= 0.0 else float(np.clip(-(a @ ab) / denom, 0.0, 1.0))
        if t <= 0.0:
            return a, [1.0], [0]
        if t >= 1.0:
            return b, [1.0], [1]
        return a + t * ab, [1.0 - t, t], [0, 1]
    a, b, c = pts
    # Vertex / edge regions first (Ericson-style case analysis).
    ab, ac = b - a, c - a
    ap = -a
    d1, d2 = float(ab @ ap), float(ac @ ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return a, [1.0], [0]
    bp = -b
    d3, d4 = float(ab @ bp), float(ac @ bp)
    if d3 >= 0.0 and d4 <= d3:
        return b, [1.0], [1]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return a + t * ab, [1.0 - t, t], [0, 1]
    cp = -c
    d5, d6 = float(ab @ cp), float(ac @ cp)
    if d6 >= 0.0 and d5 <= d6:
        return c, [1.0], [2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return a + t * ac, [1.0 - t, t], [0, 2]
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + t * (c - b), [1.0 - t, t], [1, 2]
    # Origin inside the triangle.
    denom = va + vb + vc
    lam_b = vc / denom
    lam_c = vb / denom
    return np.zeros(2), [1.0 - lam_b - lam_c, lam_b, lam_c], [0, 1, 2]


def _minkowski_support(va, vb, d):
    ia = _support_idx(va, d)
    ib = _support_idx(vb, -d)
    return va[ia] - vb[ib], ia, ib


def _witnesses(simplex, lambdas, keep, va, vb):
    p1 = np.zeros(2)
    p2 = np.zeros(2)
    for lam, k in zip(lambdas, keep):
        _, ia, ib = simplex[k]
        p1 += lam * va[ia]
        p2 += lam * vb[ib]
    return p1, p2


def sdf_points(va: np.ndarray, vb: np.ndarray) -> SeparatorResult:
    """GJK/EPA signed distance between convex hulls of two point sets.

    Point sets may be degenerate (a segment or single point) as long as the
    penetration case only arises for sets whose Minkowski difference has
    interior.
    """
    va = np.asarray(va, dtype=float).reshape(-1, 2)
    vb = np.asarray(vb, dtype=float).reshape(-1, 2)
    d = va.mean(axis=0) - vb.mean(axis=0)
    if float(d @ d) < 1e-18:
        d = np.array([1.0, 0.0])
    simplex = [_minkowski_support(va, vb, -d)]
    for _ in range(200):
        closest, lambdas, keep = _closest_on_simplex(simplex)
        dist2 = float(closest @ closest)
        if len(keep) == 3:
            return _epa(simplex, va, vb)
        simplex = [simplex[k] for k in keep]
        lam = lambdas
        if dist2 <= GEOM_EPS ** 2:
            return _origin_on_simplex(simplex, lam, va, vb)
        w, ia, ib = _minkowski_support(va, vb, -closest)
        if any(ia == s[1] and ib == s[2] for s in simplex):
            break
        # No significant progress toward the origin: converged.
        if float(closest @ closest) - float(closest @ w) <= 1e-12 * max(1.0, dist2):
            break
        simplex.append((w, ia, ib))
    closest, lambdas, keep = _closest_on_simplex(simplex)
    simplex = [simplex[k] for k in keep]
    p1, p2 = _witnesses(simplex, lambdas, range(len(simplex)), va, vb)
    dist = float(np.hypot(*closest))
    if dist <= GEOM_EPS:
        return _origin_on_simplex(simplex, lambdas, va, vb)
    normal = (p1 - p2) / np.hypot(*(p1 - p2))
    return SeparatorResult(dist, p1, p2, normal)


def _origin_on_simplex(simplex, lambdas, va, vb):
    """Disambiguate origin-on-simplex: true touch versus interior penetration.

    The origin sitting on a GJK segment does not by itself mean the shapes
    merely touch; when the Minkowski difference extends strictly past the
    segment's line on either side the origin is interior and EPA applies.
    """
    if len(simplex) == 2:
        seg = simplex[1][0] - simplex[0][0]
        perp = np.array([-seg[1], seg[0]])
        nrm = float(np.hypot(*perp))
        if nrm > 0.0:
            perp /= nrm
            for d in (perp, -perp):
                w, ia, ib = _minkowski_support(va, vb, d)
                if float(w @ d) > GEOM_EPS:
                    return _epa(simplex + [(w, ia, ib)], va, vb)
    p1, p2 = _witnesses(simplex, lambdas, range(len(simplex)), va, vb)
    return _touching_result(p1, p2, va, vb)


def _touching_result(p1, p2, va, vb):
    delta = p1 - p2
    n = float(np.hypot(*delta))
    if n > GEOM_EPS:
        normal = delta / n
    else:
        delta = va.mean(axis=0) - vb.mean(axis=0)
        n = float(np.hypot(*delta))
        normal = delta / n if n > GEOM_EPS else np.array([1.0, 0.0])
    return SeparatorResult(0.0, p1, p2, normal)


def _epa(simplex, va, vb):
    """Expanding polytope: penetration depth for overlapping convex sets."""
    # Order the starting triangle counterclockwise.
    pts = [s[0] for s in simplex]
    if _cross(pts[0], pts[1], pts[2]) < 0.0:
        simplex = [simplex[0], simplex[2], simplex[1]]
    poly = list(simplex)
    for _ in range(200):
        best_d, best_i, best_t = math.inf, 0, 0.0
        n = len(poly)
        for i in range(n):
            a = poly[i][0]
            b = poly[(i + 1) % n][0]
            ab = b - a
            L2 = float(ab @ ab)
            t = 0.5 if L2 <= 0.0 else float(np.clip(-(a @ ab) / L2, 0.0, 1.0))
            c = a + t * ab
            d = float(np.hypot(*c))
            if d < best_d:
                best_d, best_i, best_t = d, i, t
        a = poly[best_i][0]
        b = poly[(best_i + 1) % len(poly)][0]
        ab = b - a
        if best_d > GEOM_EPS:
            direction = (a + best_t * ab) / best_d
        else:
            direction = np.array([ab[1], -ab[0]])
            nrm = float(np.hypot(*direction))
            direction = direction / nrm if nrm > 0 else np.array([1.0, 0.0])
        w, ia, ib = _minkowski_support(va, vb, direction)
        # A support already on the polytope cannot expand it; stopping there
        # keeps near-touching cases from cycling on rounding-level gains.
        duplicate = any(ia == s[1] and ib == s[2] for s in poly)
        if duplicate or float(w @ direction) - best_d <= 1e-10:
            lam = 1.0 - best_t
            _, ia1, ib1 = poly[best_i]
            _, ia2, ib2 = poly[(best_i + 1) % len(poly)]
            p1 = lam * va[ia1] + best_t * va[ia2]
            p2 = lam * vb[ib1] + best_t * vb[ib2]
            if best_d <= GEOM_EPS:
                return _touching_result(p1, p2, va, vb)
            delta = p1 - p2
            nd = float(np.hypot(*delta))
            normal = -delta / nd if nd > GEOM_EPS else -direction
            return SeparatorResult(-best_d, p1, p2, normal)
        poly.insert(best_i + 1, (w, ia, ib))
    raise RuntimeError("EPA failed to converge")


def sdf_convex(A: Polygon, B: Polygon) -> SeparatorResult:
    """Signed distance between convex polygons (GJK outside, EPA inside)."""
    if not A.is_convex or not B.is_convex:
        raise ValueError("sdf_convex requires convex polygons")
    return sdf_points(A.vertices, B.vertices)


# ---------------------------------------------------------------------------
# Polygon predicates
# ---------------------------------------------------------------------------


def polygon_polygon_collides(A: Polygon, B: Polygon) -> bool:
    """True iff the interiors intersect or one polygon contains the other."""
    va, ea = A.edge_arrays()
    vb, eb = B.edge_arrays()
    for i in range(len(va)):
        for j in range(len(vb)):
            if _segments_properly_cross(va[i], ea[i], vb[j], eb[j]):
                return True
    # No proper crossing: containment decides (touching boundaries excluded).
    if A.signed_distance_to_point(B.vertices[0]) > GEOM_EPS and all(
        A.signed_distance_to_point(p) > -GEOM_EPS for p in B.vertices
    ):
        return True
    if B.signed_distance_to_point(A.vertices[0]) > GEOM_EPS and all(
        B.signed_distance_to_point(p) > -GEOM_EPS for p in A.vertices
    ):
        return True
    return False


def footprint_inside_field(fp: Polygon, P: Polygon) -> bool:
    """True iff every fp vertex lies in P and no fp edge crosses a P edge.

    Touching contact counts as inside (collision-free for planning checks).
    """
    if not np.all(P.contains_points(fp.vertices)):
        return False
    va, ea = fp.edge_arrays()
    vb, eb = P.edge_arrays()
    for i in range(len(va)):
        for j in range(len(vb)):
            if _segments_properly_cross(va[i], ea[i], vb[j], eb[j]):
                return False
    return True


def _points_in_polygon_batch(qs: np.ndarray, poly: Polygon, tol: float = GEOM_EPS) -> np.ndarray:
    """Boundary-inclusive containment for many points at once (bool (n,))."""
    qs = np.asarray(qs, dtype=float).reshape(-1, 2)
    a, b = poly.edge_arrays()
    near = _points_segments_distance(qs, a, b).min(axis=1) <= tol
    xi, yi = a[:, 0], a[:, 1]
    xj, yj = b[:, 0], b[:, 1]
    qx = qs[:, 0][:, None]
    qy = qs[:, 1][:, None]
    straddle = (yi[None, :] > qy) != (yj[None, :] > qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = (xj - xi)[None, :] * (qy - yi[None, :]) / (yj - yi)[None, :] + xi[None, :]
    hits = straddle & (qx < xc)
    inside = (hits.sum(axis=1) % 2).astype(bool)
    return near | inside


def _segments_cross_batch(p1, p2, q1, q2, eps: float = GEOM_EPS) -> np.ndarray:
    """Proper-crossing matrix between segment sets (n,2)x2 and (m,2)x2."""

    def cross(o, a, b):
        return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (
            a[..., 1] - o[..., 1]
        ) * (b[..., 0] - o[..., 0])

    p1e = p1[:, None, :]
    p2e = p2[:, None, :]
    q1e = q1[None, :, :]
    q2e = q2[None, :, :]
    d1 = cross(q1e, q2e, p1e)
    d2 = cross(q1e, q2e, p2e)
    d3 = cross(p1e, p2e, q1e)
    d4 = cross(p1e, p2e, q2e)
    s1 = ((d1 > eps) & (d2 < -eps)) | ((d1 < -eps) & (d2 > eps))
    s2 = ((d3 > eps) & (d4 < -eps)) | ((d3 < -eps) & (d4 > eps))
    return s1 & s2


class FootprintChecker:
    """Batched validity tests for rectangular footprints in one field.

    Matches footprint_inside_field and polygon_polygon_collides semantics
    but avoids per-pose Polygon construction, so the planner can test whole
    primitive sweeps in a few vectorized calls.
    """

    def __init__(self, field: Polygon, obstacles=()):
        self.field = field
        self.obstacles = list(obstacles)
        self._fa, self._fb = field.edge_arrays()
        self._field_convex = field.is_convex
        self._obstacle_edges = [obs.edge_arrays() for obs in self.obstacles]

    def corners_valid(self, corners: np.ndarray) -> bool:
        """corners: (n, 4, 2) CCW rectangles; True iff every one is clear."""
        corners = np.asarray(corners, dtype=float)
        flat = corners.reshape(-1, 2)
        if not np.all(_points_in_polygon_batch(flat, self.field)):
            return False
        e1 = corners.reshape(-1, 4, 2)
        edges_a = e1.reshape(-1, 2)
        edges_b = e1[:, (1, 2, 3, 0), :].reshape(-1, 2)
        if not self._field_convex:
            if np.any(_segments_cross_batch(edges_a, edges_b, self._fa, self._fb)):
                return False
        for obs, (oa, ob) in zip(self.obstacles, self._obstacle_edges):
            if np.any(_segments_cross_batch(edges_a, edges_b, oa, ob)):
                return False
            # No edge crossing: containment either way still collides.
            if np.any(_points_in_polygon_batch(e1[:, 0, :], obs, -GEOM_EPS)):
                return False
            first = obs.vertices[0]
            for quad in e1:
                if _QuadView(quad).strictly_inside(first):
                    return False
        return True


def footprint_corners_batch(poses: np.ndarray, local: np.ndarray) -> np.ndarray:
    """World corners (n,4,2) of a rectangle ``local`` (4,2) at poses (n,3)."""
    poses = np.asarray(poses, dtype=float)
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    rot = np.empty((len(poses), 2, 2))
    rot[:, 0, 0] = c
    rot[:, 0, 1] = -s
    rot[:, 1, 0] = s
    rot[:, 1, 1] = c
    return np.einsum("nij,kj->nki", rot, local) + poses[:, None, :2]


def segment_intersects_polygon(a, b, poly: Polygon) -> bool:
    """True iff segment [a, b] touches or crosses poly (or lies inside it)."""
    a = as_point(a)
    b = as_point(b)
    va, ea = poly.edge_arrays()
    for i in range(len(va)):
        if _segments_touch_or_cross(a, b, va[i], ea[i]):
            return True
    return poly.contains_point(a) or poly.contains_point(b)


def _line_intersection(p, dp, q, dq):
    denom = dp[0] * dq[1] - dp[1] * dq[0]
    if abs(denom) <= GEOM_EPS:
        return None
    t = ((q[0] - p[0]) * dq[1] - (q[1] - p[1]) * dq[0]) / denom
    return p + t * dp


def inflate_edge(poly: Polygon, edge_index: int, width: float) -> Polygon:
    """Offset one edge outward (away from the interior) by ``width``.

    Adjacent edges are extended to meet the moved edge line; the rest of the
    polygon is untouched. Raises if the offset collapses the polygon or the
    result is no longer simple.
    """
    if width < 0.0:
        raise ValueError("inflation width must be non-negative")
    if width == 0.0:
        return poly
    v = poly.vertices
    n = len(v)
    i = edge_index % n
    a, b = v[i], v[(i + 1) % n]
    e = b - a
    outward = np.array([e[1], -e[0]]) / np.hypot(*e)  # CCW: interior on the left
    a_shift = a + width * outward
    prev = v[(i - 1) % n]
    nxt = v[(i + 2) % n]
    new_a = _line_intersection(a_shift, e, prev, a - prev)
    new_b = _line_intersection(a_shift, e, nxt, b - nxt)
    if new_a is None or new_b is None:
        raise ValueError("adjacent edge parallel to inflated edge")
    if float((new_b - new_a) @ e) <= GEOM_EPS:
        raise ValueError("inflation collapses the polygon")
    out = v.copy()
    out[i] = new_a
    out[(i + 1) % n] = new_b
    try:
        return Polygon(out)
    except ValueError as exc:
        raise ValueError(f"inflation produced an invalid polygon: {exc}") from exc


def inflate_polygon(poly: Polygon, width: float) -> Polygon:
    """Offset every edge of a convex polygon outward by ``width``."""
    if width <= 0.0:
        return poly
    v = poly.vertices
    n = len(v)
    shifted = []
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        e = b - a
        outward = np.array([e[1], -e[0]]) / np.hypot(*e)
        shifted.append((a + width * outward, e))
    out = []
    for i in range(n):
        p_prev, d_prev = shifted[(i - 1) % n]
        p_cur, d_cur = shifted[i]
        pt = _line_intersection(p_prev, d_prev, p_cur, d_cur)
        if pt is None:
            pt = p_cur
        out.append(pt)
    return Polygon(out)


def convex_polygons_clearance(corners: np.ndarray, poly: Polygon) -> float:
    """Fast signed clearance between a convex quad (corners, CCW) and poly.

    Positive when disjoint (minimum boundary distance), negative containment
    depth approximation when overlapping. Exact in the disjoint case.
    """
    pv = poly.vertices
    a, b = poly.edge_arrays()
    d1 = _points_segments_distance(corners, a, b).min()
    ca = corners
    cb = np.roll(corners, -1, axis=0)
    d2 = _points_segments_distance(pv, ca, cb).min()
    sep = min(float(d1), float(d2))
    quad = _QuadView(corners)
    crossing = False
    for i in range(len(ca)):
        for j in range(len(a)):
            if _segments_properly_cross(ca[i], cb[i], a[j], b[j]):
                crossing = True
                break
        if crossing:
            break
    inside_depth = 0.0
    for p in corners:
        if poly._strictly_inside(p):
            inside_depth = max(inside_depth, poly.boundary_distance(p))
            crossing = True
    for p in pv:
        if quad.strictly_inside(p):
            inside_depth = max(inside_depth, quad.boundary_distance(p))
            crossing = True
    if crossing:
        return -max(inside_depth, 0.0)
    return sep


class _QuadView:
    """Minimal containment/boundary helpers for a CCW convex quad."""

    def __init__(self, corners: np.ndarray):
        self.v = corners

    def strictly_inside(self, p) -> bool:
        v = self.v
        n = len(v)
        for i in range(n):
            if _cross(v[i], v[(i + 1) % n], p) <= GEOM_EPS:
                return False
        return True

    def boundary_distance(self, p) -> float:
        a = self.v
        b = np.roll(self.v, -1, axis=0)
        return float(_points_segments_distance(np.asarray(p, float)[None, :], a, b).min())
