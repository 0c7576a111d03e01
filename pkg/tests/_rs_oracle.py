"""Independent shortest-path oracle for bidirectional Dubins-style curves.

Enumerates the canonical word templates (turn/straight patterns with gear
switch positions, length ties and embedded quarter turns) and solves each
for its free segment lengths with a damped Newton iteration, vectorized
over both initial guesses and query pose pairs. A candidate counts only if
the replayed endpoint matches the goal to 1e-10 and every free length is
nonnegative. The optimum is the minimum total length over all validated
candidates.

This shares no trigonometric formulas with the production solver; it only
relies on the classification of optimal words into these shape families.
"""
import math

import numpy as np

QUARTER = math.pi / 2
TURN_GUESSES = (0.35, 1.2, 2.1, 3.0)
STRAIGHT_GUESSES = (0.5, 3.0, 8.0)

# A segment spec is ("f", free_index) or ("q",) for a fixed quarter turn.
_F = lambda i: ("f", i)
_Q = ("q",)


def _templates():
    out = []

    def add(steers, gears, spec):
        out.append((np.array(steers, float), np.array(gears, float), spec))

    free3 = [_F(0), _F(1), _F(2)]
    for a in (1.0, -1.0):
        b = -a
        # Three turns with every gear pattern seen in optimal words.
        for gears in [
            (1, -1, 1), (-1, 1, -1), (1, -1, -1),
            (-1, 1, 1), (1, 1, -1), (-1, -1, 1),
        ]:
            add((a, b, a), gears, free3)
        # Turn, straight, turn at constant gear.
        for last in (a, b):
            for g in (1, -1):
                add((a, 0.0, last), (g, g, g), free3)
        # Four turns with the middle pair tied in length.
        for gears in [(1, 1, -1, -1), (-1, -1, 1, 1), (1, -1, -1, 1), (-1, 1, 1, -1)]:
            add((a, b, a, b), gears, [_F(0), _F(1), _F(1), _F(2)])
        # Turn, quarter turn, straight, turn.
        for last in (a, b):
            for gears in [(1, -1, -1, -1), (-1, 1, 1, 1)]:
                add((a, b, 0.0, last), gears, [_F(0), _Q, _F(1), _F(2)])
        # Mirror image of the previous family (quarter turn before the end).
        for first in (a, b):
            for gears in [(-1, -1, -1, 1), (1, 1, 1, -1)]:
                add((first, 0.0, b, a), gears, [_F(0), _F(1), _Q, _F(2)])
        # Turn, quarter, straight, quarter, turn (both steer arrangements).
        for mid in [(a, b, 0.0, a, b), (a, b, 0.0, b, a)]:
            for gears in [(1, -1, -1, -1, 1), (-1, 1, 1, 1, -1)]:
                add(mid, gears, [_F(0), _Q, _F(1), _Q, _F(2)])
    return out


_TEMPLATES = _templates()


def _forward(steers, gears, spec, w):
    """Roll the template out from the origin pose.

    ``w`` has shape (..., 3). Returns the final pose arrays plus cached
    per-segment end poses for the analytic Jacobian.
    """
    shape = w.shape[:-1]
    x = np.zeros(shape)
    y = np.zeros(shape)
    th = np.zeros(shape)
    ends = []
    for s, g, sp in zip(steers, gears, spec):
        length = QUARTER if sp[0] == "q" else w[..., sp[1]]
        d = g * length
        if s == 0.0:
            x = x + d * np.cos(th)
            y = y + d * np.sin(th)
        else:
            th_new = th + s * d
            x = x + (np.sin(th_new) - np.sin(th)) / s
            y = y - (np.cos(th_new) - np.cos(th)) / s
            th = th_new
        ends.append((x, y, th))
    return x, y, th, ends


def _jacobian(steers, gears, spec, ends, xf, yf):
    """d(final pose)/d(free lengths), shape (..., 3, 3)."""
    J = np.zeros(xf.shape + (3, 3))
    for (s, g, sp), (xk, yk, thk) in zip(zip(steers, gears, spec), ends):
        if sp[0] == "q":
            continue
        col = sp[1]
        dx = np.cos(thk) + s * -(yf - yk)
        dy = np.sin(thk) + s * (xf - xk)
        J[..., 0, col] += g * dx
        J[..., 1, col] += g * dy
        J[..., 2, col] += g * s
    return J


def _solve3(J, r):
    """Batched 3x3 solve with singular systems returning a zero step."""
    det = np.linalg.det(J)
    ok = np.abs(det) > 1e-12
    step = np.zeros_like(r)
    if np.any(ok):
        step[ok] = np.linalg.solve(J[ok], r[ok][..., None])[..., 0]
    return step, ok


def _template_best(steers, gears, spec, goals):
    """Minimum validated length of one template for every goal pose."""
    n_free_turn = [False, False, False]
    fixed_total = 0.0
    for s, sp in zip(steers, spec):
        if sp[0] == "q":
            fixed_total += QUARTER
        elif s != 0.0:
            n_free_turn[sp[1]] = True
    axes = [TURN_GUESSES if t else STRAIGHT_GUESSES for t in n_free_turn]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T  # (G, 3)

    P = len(goals)
    G = len(grid)
    w = np.broadcast_to(grid[:, None, :], (G, P, 3)).copy()
    gx, gy, gth = goals[:, 0], goals[:, 1], goals[:, 2]
    active = np.ones((G, P), dtype=bool)
    for _ in range(22):
        xf, yf, thf, ends = _forward(steers, gears, spec, w)
        r = np.stack(
            [xf - gx, yf - gy, np.arctan2(np.sin(thf - gth), np.cos(thf - gth))],
            axis=-1,
        )
        if np.all(np.abs(r[active]) < 1e-13):
            break
        J = _jacobian(steers, gears, spec, ends, xf, yf)
        step, ok = _solve3(J, r)
        step = np.clip(step, -1.5, 1.5)
        active = active & ok
        w = np.where(active[..., None], w - step, w)

    xf, yf, thf, _ = _forward(steers, gears, spec, w)
    res = np.maximum(
        np.maximum(np.abs(xf - gx), np.abs(yf - gy)),
        np.abs(np.arctan2(np.sin(thf - gth), np.cos(thf - gth))),
    )
    ties = np.zeros(3)
    for s, sp in zip(steers, spec):
        if sp[0] == "f":
            ties[sp[1]] += 1.0
    lengths = fixed_total + np.clip(w, 0.0, None) @ ties
    valid = (res < 1e-10) & np.all(w > -1e-9, axis=-1)
    lengths = np.where(valid, lengths, np.inf)
    return lengths.min(axis=0)  # (P,)


def oracle_lengths(goals):
    """Shortest feasible length for each goal pose in the unit-radius frame.

    ``goals`` is an (n, 3) array of [x, y, theta] targets for a vehicle
    starting at the origin with heading zero.
    """
    goals = np.asarray(goals, dtype=float)
    best = np.full(len(goals), np.inf)
    for steers, gears, spec in _TEMPLATES:
        best = np.minimum(best, _template_best(steers, gears, spec, goals))
    return best


def normalize_pair(start, goal, radius):
    """Express ``goal`` in the unit-radius frame anchored at ``start``."""
    dx = (goal[0] - start[0]) / radius
    dy = (goal[1] - start[1]) / radius
    c, s = math.cos(start[2]), math.sin(start[2])
    return np.array([c * dx + s * dy, -s * dx + c * dy, goal[2] - start[2]])
