"""Problem instance types, monitoring and uncertainty equations, cost evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import targets as tg

ZERO_TOL = 1e-12


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    initial_position: float
    sensing_range: float

    def __post_init__(self):
        if not self.sensing_range > 0:
            raise ScenarioError(f"sensing_range must be > 0, got {self.sensing_range}")


@dataclass(frozen=True)
class TargetSpec:
    growth_rate: float
    reduction_rate: float
    initial_uncertainty: float
    trajectory: tg.TargetTrajectory

    def __post_init__(self):
        if not self.growth_rate > 0:
            raise ScenarioError(f"growth_rate must be > 0, got {self.growth_rate}")
        if not self.reduction_rate > self.growth_rate:
            raise ScenarioError(
                f"reduction_rate ({self.reduction_rate}) must exceed growth_rate ({self.growth_rate})")
        if not self.initial_uncertainty >= 0:
            raise ScenarioError(f"initial_uncertainty must be >= 0, got {self.initial_uncertainty}")


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentSpec, ...]
    targets: tuple[TargetSpec, ...]
    horizon: float
    separation_margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.horizon > 0:
            raise ScenarioError(f"horizon must be > 0, got {self.horizon}")
        if len(self.agents) < 1 or len(self.targets) < 1:
            raise ScenarioError("need at least one agent and one target")
        if self.separation_margin < 0:
            raise ScenarioError("separation_margin must be >= 0")
        # trajectories are bound to the horizon so out-of-range queries fail loudly
        bound = tuple(
            TargetSpec(t.growth_rate, t.reduction_rate, t.initial_uncertainty,
                       tg.with_horizon(t.trajectory, self.horizon))
            for t in self.targets)
        object.__setattr__(self, "targets", bound)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def target_positions(self, t: float) -> np.ndarray:
        return np.array([tgt.trajectory.position_at(t) for tgt in self.targets])

    def target_velocities(self, t: float) -> np.ndarray:
        return np.array([tgt.trajectory.velocity_at(t) for tgt in self.targets])


def monitoring(target_pos: float, agent_pos: float, sensing_range: float) -> float:
    return max(0.0, 1.0 - abs(target_pos - agent_pos) / sensing_range)


def joint_monitoring(per_agent_values: Sequence[float]) -> float:
    return 1.0 - float(np.prod([1.0 - p for p in per_agent_values]))


def uncertainty_rate(R_i: float, A_i: float, B_i: float, P_i: float) -> float:
    """Rate of change of a target's uncertainty; pinned at zero while it would go negative."""
    if R_i <= ZERO_TOL and A_i < B_i * P_i:
        return 0.0
    return A_i - B_i * P_i


@dataclass
class Trajectory:
    """Sampled ``R`` history sufficient to evaluate the cost.

    Rows at identical times mark an event boundary: the first row carries the
    pre-event rate, the second the post-event rate.
    """

    time: np.ndarray
    uncertainty: np.ndarray        # (K, M)
    uncertainty_rate: np.ndarray   # (K, M)
    horizon: float


class IncompleteTrajectory(ValueError):
    pass


def segment_integrals(time, values, rates) -> np.ndarray:
    """Per-step integral of a sampled signal whose derivative is also sampled.

    Simpson's rule applied to the cubic Hermite interpolant through the two
    endpoint values and slopes; exact for cubics.
    """
    time = np.asarray(time)
    values = np.asarray(values)
    rates = np.asarray(rates)
    h = np.diff(time)
    if values.ndim > 1:
        h = h[:, None]
    return 0.5 * h * (values[1:] + values[:-1]) + h * h / 12.0 * (rates[:-1] - rates[1:])


def cost(trajectory) -> float:
    """Time-averaged total uncertainty ``(1/T) * integral of sum_i R_i``."""
    t = np.asarray(trajectory.time, dtype=float)
    T = float(trajectory.horizon)
    tol = 1e-9 * max(T, 1.0)
    if t.size < 2 or abs(t[0]) > tol or abs(t[-1] - T) > tol:
        raise IncompleteTrajectory(
            f"trajectory covers [{t[0] if t.size else None}, {t[-1] if t.size else None}], need [0, {T}]")
    if np.any(np.diff(t) < 0):
        raise IncompleteTrajectory("sample times must be nondecreasing")
    R = np.asarray(trajectory.uncertainty, dtype=float)
    dR = np.asarray(trajectory.uncertainty_rate, dtype=float)
    total = segment_integrals(t, R.sum(axis=1), dR.sum(axis=1)).sum()
    return float(total / T)


@dataclass
class AssumptionReport:
    max_speed: float
    max_speed_time: float
    max_speed_target: int
    speed_ok: bool
    min_separation: float
    min_separation_time: float
    min_separation_pair: tuple[int, int] | None
    required_separation: float
    separation_ok: bool
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.speed_ok and self.separation_ok


def validate_assumptions(scenario: Scenario, grid_step: float) -> AssumptionReport:
    """Check target speeds against unit agent speed and target separation on a time grid.

    Violations are reported as warnings; scenarios that break them are still
    valid problem instances.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be > 0")
    T = scenario.horizon
    n = max(int(np.ceil(T / grid_step)), 1)
    grid = np.linspace(0.0, T, n + 1)
    pos = np.array([[tgt.trajectory.position_at(t) for tgt in scenario.targets] for t in grid])
    vel = np.abs(np.array([[tgt.trajectory.velocity_at(t) for tgt in scenario.targets] for t in grid]))

    k, i = np.unravel_index(int(np.argmax(vel)), vel.shape)
    vmax = float(vel[k, i])
    speed_ok = vmax <= 1.0
    required = 2.0 * max(a.sensing_range for a in scenario.agents) + scenario.separation_margin

    min_sep, min_t, pair = np.inf, 0.0, None
    m = scenario.n_targets
    for a in range(m):
        for b in range(a + 1, m):
            d = np.abs(pos[:, a] - pos[:, b])
            kk = int(np.argmin(d))
            if d[kk] < min_sep:
                min_sep, min_t, pair = float(d[kk]), float(grid[kk]), (a, b)
    sep_ok = pair is None or min_sep >= required

    warnings = []
    if not speed_ok:
        warnings.append(f"target {i} speed {vmax:.6g} exceeds 1 at t={grid[k]:.6g}")
    if not sep_ok:
        warnings.append(
            f"targets {pair[0]} and {pair[1]} are {min_sep:.6g} apart at t={min_t:.6g}, "
            f"below 2*max(r)+margin = {required:.6g}")
    return AssumptionReport(
        max_speed=vmax, max_speed_time=float(grid[k]), max_speed_target=int(i), speed_ok=speed_ok,
        min_separation=float(min_sep), min_separation_time=min_t, min_separation_pair=pair,
        required_separation=required, separation_ok=sep_ok, warnings=warnings)
