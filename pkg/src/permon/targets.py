"""Target motion models with exact position, velocity and position-integral queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

STATIC, PIECEWISE_LINEAR, SINUSOID = 0, 1, 2

_TIME_SLACK = 1e-12


class TrajectoryError(ValueError):
    pass


def _check_time(t: float, horizon: float | None) -> None:
    if t < -_TIME_SLACK or (horizon is not None and t > horizon * (1 + _TIME_SLACK) + _TIME_SLACK):
        raise TrajectoryError(f"time {t} outside [0, {horizon}]")


@dataclass(frozen=True)
class Static:
    position: float
    horizon: float | None = None

    kind = "static"

    def position_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        return float(self.position)

    def velocity_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        return 0.0

    def integral(self, t1: float, t2: float) -> float:
        _check_interval(t1, t2, self.horizon)
        return float(self.position) * (t2 - t1)

    def breakpoints(self) -> list[float]:
        return []


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear legs between ``(time, position)`` waypoints; the first time must be 0."""

    waypoints: tuple[tuple[float, float], ...]
    horizon: float | None = None
    _t: np.ndarray = field(init=False, repr=False, compare=False)
    _x: np.ndarray = field(init=False, repr=False, compare=False)

    kind = "piecewise_linear"

    def __post_init__(self):
        wps = tuple((float(a), float(b)) for a, b in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if len(wps) < 2:
            raise TrajectoryError("piecewise_linear needs at least two waypoints")
        t = np.array([w[0] for w in wps])
        x = np.array([w[1] for w in wps])
        if t[0] != 0.0:
            raise TrajectoryError("first waypoint time must be 0")
        if np.any(np.diff(t) <= 0):
            raise TrajectoryError("waypoint times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise TrajectoryError("waypoint positions must be finite")
        if self.horizon is not None and t[-1] < self.horizon:
            raise TrajectoryError(f"last waypoint time {t[-1]} < horizon {self.horizon}")
        object.__setattr__(self, "_t", t)
        object.__setattr__(self, "_x", x)

    def _segment(self, t: float) -> int:
        # right-continuous: breakpoint belongs to the segment it starts
        k = int(np.searchsorted(self._t, t, side="right")) - 1
        return min(max(k, 0), len(self._t) - 2)

    def position_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        k = self._segment(t)
        t0, t1 = self._t[k], self._t[k + 1]
        x0, x1 = self._x[k], self._x[k + 1]
        return float(x0 + (x1 - x0) * (t - t0) / (t1 - t0))

    def velocity_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        k = self._segment(t)
        return float((self._x[k + 1] - self._x[k]) / (self._t[k + 1] - self._t[k]))

    def integral(self, t1: float, t2: float) -> float:
        _check_interval(t1, t2, self.horizon)
        knots = [t1] + [float(b) for b in self._t if t1 < b < t2] + [t2]
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            total += 0.5 * (b - a) * (self._pos(a) + self._pos(b))
        return total

    def _pos(self, t: float) -> float:
        k = self._segment(t)
        t0, t1 = self._t[k], self._t[k + 1]
        return float(self._x[k] + (self._x[k + 1] - self._x[k]) * (t - t0) / (t1 - t0))

    def breakpoints(self) -> list[float]:
        return [float(b) for b in self._t[1:-1]]


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(angular_frequency * t + phase)``."""

    offset: float
    amplitude: float
    angular_frequency: float
    phase: float = 0.0
    horizon: float | None = None

    kind = "sinusoid"

    def position_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        return self.offset + self.amplitude * math.sin(self.angular_frequency * t + self.phase)

    def velocity_at(self, t: float) -> float:
        _check_time(t, self.horizon)
        w = self.angular_frequency
        return self.amplitude * w * math.cos(w * t + self.phase)

    def integral(self, t1: float, t2: float) -> float:
        _check_interval(t1, t2, self.horizon)
        a, w, ph = self.amplitude, self.angular_frequency, self.phase
        base = self.offset * (t2 - t1)
        if w == 0.0:
            return base + a * math.sin(ph) * (t2 - t1)
        return base - a / w * (math.cos(w * t2 + ph) - math.cos(w * t1 + ph))

    def breakpoints(self) -> list[float]:
        return []


TargetTrajectory = Union[Static, PiecewiseLinear, Sinusoid]


def _check_interval(t1: float, t2: float, horizon: float | None) -> None:
    if t1 > t2:
        raise TrajectoryError(f"integration bounds reversed: {t1} > {t2}")
    _check_time(t1, horizon)
    _check_time(t2, horizon)


def position(traj: TargetTrajectory, t: float) -> float:
    return traj.position_at(t)


def velocity(traj: TargetTrajectory, t: float) -> float:
    """Exact velocity; right-hand derivative at piecewise-linear breakpoints."""
    return traj.velocity_at(t)


def position_integral(traj: TargetTrajectory, t1: float, t2: float) -> float:
    return traj.integral(t1, t2)


def with_horizon(traj: TargetTrajectory, horizon: float) -> TargetTrajectory:
    if isinstance(traj, Static):
        return Static(traj.position, horizon)
    if isinstance(traj, PiecewiseLinear):
        return PiecewiseLinear(traj.waypoints, horizon)
    return Sinusoid(traj.offset, traj.amplitude, traj.angular_frequency, traj.phase, horizon)


def max_speed(traj: TargetTrajectory) -> float:
    if isinstance(traj, Static):
        return 0.0
    if isinstance(traj, PiecewiseLinear):
        return float(np.max(np.abs(np.diff(traj._x) / np.diff(traj._t))))
    return abs(traj.amplitude * traj.angular_frequency)


def pack(trajectories) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten trajectories into arrays for the compiled stepping kernel.

    Returns ``(kind, par, wp_t, wp_x, wp_off)``; waypoints of target ``i`` live in
    ``wp_t[wp_off[i]:wp_off[i+1]]``.
    """
    m = len(trajectories)
    kind = np.zeros(m, dtype=np.int64)
    par = np.zeros((m, 4))
    wts, wxs, off = [], [], [0]
    for i, tr in enumerate(trajectories):
        if isinstance(tr, Static):
            kind[i] = STATIC
            par[i, 0] = tr.position
        elif isinstance(tr, PiecewiseLinear):
            kind[i] = PIECEWISE_LINEAR
            wts.extend(tr._t.tolist())
            wxs.extend(tr._x.tolist())
        elif isinstance(tr, Sinusoid):
            kind[i] = SINUSOID
            par[i] = (tr.offset, tr.amplitude, tr.angular_frequency, tr.phase)
        else:
            raise TypeError(f"unknown trajectory {tr!r}")
        off.append(len(wts))
    return (kind, par, np.array(wts, dtype=float), np.array(wxs, dtype=float),
            np.array(off, dtype=np.int64))
