"""Timed state-sequence container shared by planner, baseline and tracker."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trajectory:
    """Key states at t_n = n * dt.

    ``states`` rows are [x, y, theta, v]. ``curvatures[n]`` and ``gears[n]``
    describe the motion segment leaving state n (the last row repeats the
    final segment's gear with zero curvature).
    """

    states: np.ndarray
    curvatures: np.ndarray
    gears: np.ndarray
    dt: float

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[1] != 4 or states.shape[0] < 1:
            raise ValueError("trajectory states must be an (n, 4) array")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "curvatures", np.asarray(self.curvatures, dtype=float))
        object.__setattr__(self, "gears", np.asarray(self.gears, dtype=int))
        if len(self.curvatures) != len(states) or len(self.gears) != len(states):
            raise ValueError("curvature/gear arrays must match the state count")
        if not np.all(np.abs(self.gears) == 1):
            raise ValueError("gears must be +1 or -1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def poses(self) -> np.ndarray:
        return self.states[:, :3]

    @property
    def path_length(self) -> float:
        d = np.diff(self.positions, axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def window(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory covering state indices [start, stop]."""
        if not (0 <= start <= stop < self.num_states):
            raise IndexError("window out of range")
        return Trajectory(
            self.states[start : stop + 1].copy(),
            self.curvatures[start : stop + 1].copy(),
            self.gears[start : stop + 1].copy(),
            self.dt,
        )


def concatenate(parts) -> Trajectory:
    """Chain trajectories; duplicated junction states are dropped."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to concatenate")
    states = [parts[0].states]
    curv = [parts[0].curvatures]
    gears = [parts[0].gears]
    for prev, cur in zip(parts, parts[1:]):
        if not np.allclose(prev.states[-1, :3], cur.states[0, :3], atol=1e-6):
            raise ValueError("trajectory pieces do not join")
        states.append(cur.states[1:])
        # The junction state's outgoing motion belongs to the next piece.
        states[-2] = states[-2].copy()
        states[-2][-1, 3] = cur.states[0, 3]
        curv[-1] = curv[-1].copy()
        curv[-1][-1] = cur.curvatures[0]
        gears[-1] = gears[-1].copy()
        gears[-1][-1] = cur.gears[0]
        curv.append(cur.curvatures[1:])
        gears.append(cur.gears[1:])
    return Trajectory(
        np.vstack(states), np.concatenate(curv), np.concatenate(gears), parts[0].dt
    )
