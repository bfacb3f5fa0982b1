"""Piecewise quintic reference trajectories.

Every segment is a rest-to-rest quintic (zero velocity and acceleration at both
ends), so position is continuous and all derivatives stay bounded. Outside the
waypoint time range the reference holds the first/last waypoint.
"""

from __future__ import annotations

import numpy as np


def quintic_blend(tau):
    """Normalized rest-to-rest quintic 10 t^3 - 15 t^4 + 6 t^5 and two derivatives."""
    tau = np.clip(tau, 0.0, 1.0)
    t2 = tau * tau
    t3 = t2 * tau
    pos = t3 * (10.0 - 15.0 * tau + 6.0 * t2)
    vel = 30.0 * t2 * (1.0 - tau) ** 2
    acc = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)
    return pos, vel, acc


class QuinticTrajectory:
    """Rest-to-rest quintic segments through ``waypoints`` at ``times``.

    ``waypoints`` has shape (K, m) for m channels; ``times`` is strictly increasing.
    """

    def __init__(self, waypoints, times):
        self.waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
        if self.waypoints.shape[0] == 1 and np.ndim(waypoints) == 1:
            self.waypoints = self.waypoints.T
        self.times = np.asarray(times, dtype=float)
        if self.waypoints.shape[0] < 2:
            raise ValueError("need at least two waypoints")
        if self.times.shape != (self.waypoints.shape[0],):
            raise ValueError("one time per waypoint is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def channels(self) -> int:
        return self.waypoints.shape[1]

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        times, wp = self.times, self.waypoints
        if t <= times[0]:
            z = np.zeros(self.channels)
            return wp[0].copy(), z, z.copy()
        if t >= times[-1]:
            z = np.zeros(self.channels)
            return wp[-1].copy(), z, z.copy()
        i = int(np.searchsorted(times, t, side="right")) - 1
        T = times[i + 1] - times[i]
        pos, vel, acc = quintic_blend((t - times[i]) / T)
        delta = wp[i + 1] - wp[i]
        return wp[i] + delta * pos, delta * vel / T, delta * acc / (T * T)


def quintic_trajectory(waypoints, times) -> QuinticTrajectory:
    return QuinticTrajectory(waypoints, times)


class StackedReference:
    """Concatenates per-group trajectories into one chi_d(t) signal."""

    def __init__(self, parts):
        self.parts = list(parts)

    def __call__(self, t: float):
        outs = [p(t) for p in self.parts]
        return tuple(np.concatenate([o[k] for o in outs]) for k in range(3))
