"""Control canonicalization on single-target intervals and sensing-sequence decomposition.

Open-loop controls are piecewise constant on a uniform grid.  Agent
positions at grid nodes are exact, which is what the endpoint and distance
checks below rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import Scenario
from .simulator import EventKind, OpenLoopControl, SimOptions, simulate


class CanonicalizationError(ValueError):
    pass


@dataclass(frozen=True)
class SampledControl(OpenLoopControl):
    """Per-agent control, constant on each cell ``[k*dt, (k+1)*dt)``."""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be (agents, cells)")
        if np.any(np.abs(v) > 1.0 + 1e-12):
            raise ValueError("control values must lie in [-1, 1]")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be > 0")
        object.__setattr__(self, "values", np.clip(v, -1.0, 1.0))

    @classmethod
    def for_horizon(cls, values, horizon: float) -> "SampledControl":
        v = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(v, horizon / v.shape[1])

    @classmethod
    def zeros(cls, n_agents: int, horizon: float, grid_step: float | None = None) -> "SampledControl":
        cells = _cells(horizon, grid_step)
        return cls(np.zeros((n_agents, cells)), horizon / cells)

    @classmethod
    def random(cls, rng: np.random.Generator, n_agents: int, horizon: float,
               block: float | None = None, grid_step: float | None = None) -> "SampledControl":
        """Uniform random values held over blocks of ``block`` time units."""
        cells = _cells(horizon, grid_step)
        dt = horizon / cells
        per = max(int(round((block or 0.05 * horizon) / dt)), 1)
        nblk = -(-cells // per)
        vals = np.repeat(rng.uniform(-1.0, 1.0, (n_agents, nblk)), per, axis=1)[:, :cells]
        return cls(vals, dt)

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    def node_times(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.grid_step

    def positions(self, agent: int, initial_position: float) -> np.ndarray:
        """Exact agent positions at the grid nodes."""
        return initial_position + np.concatenate([[0.0], np.cumsum(self.values[agent])]) * self.grid_step


def _cells(horizon: float, grid_step: float | None) -> int:
    dt = grid_step if grid_step is not None else 1e-3 * horizon
    return max(int(round(horizon / dt)), 1)


# ---------------------------------------------------------------------------
# decomposition into sensing phases


class SensingPhase(NamedTuple):
    target: int
    start: float
    end: float


@dataclass
class Decomposition:
    phases: list[SensingPhase]
    flags: list[str] = field(default_factory=list)
    length_bound: int | None = None

    def __iter__(self):
        return iter((p.target, (p.start, p.end)) for p in self.phases)

    def __len__(self):
        return len(self.phases)


def sensing_intervals(u: SampledControl, scenario: Scenario, agent: int,
                      options: SimOptions | None = None) -> list[tuple[int, float, float]]:
    """``(target, enter, exit)`` for every contact of ``agent`` with a sensing range."""
    T = scenario.horizon
    sim = simulate(scenario, u, options)
    open_at: dict[int, float] = {}
    pos0 = scenario.target_positions(0.0)
    s0 = scenario.agents[agent].initial_position
    r = scenario.agents[agent].sensing_range
    for i in range(scenario.n_targets):
        if abs(pos0[i] - s0) < r:
            open_at[i] = 0.0
    out = []
    for e in sim.events:
        if e.agent != agent:
            continue
        if e.kind == EventKind.SENSE_ENTER:
            open_at.setdefault(e.target, e.time)
        elif e.kind == EventKind.SENSE_EXIT and e.target in open_at:
            out.append((e.target, open_at.pop(e.target), e.time))
    out.extend((i, t0, T) for i, t0 in open_at.items())
    out.sort(key=lambda x: (x[1], x[2], x[0]))
    return out


def decompose_sensing_sequence(u: SampledControl, scenario: Scenario, agent: int,
                               options: SimOptions | None = None) -> Decomposition:
    """Ordered sensed targets with partition times; only the phase's target is sensed
    inside each phase unless a flag says otherwise."""
    T = scenario.horizon
    contacts = sensing_intervals(u, scenario, agent, options)
    flags: list[str] = []
    phases: list[SensingPhase] = []
    bound = _length_bound(scenario, agent)
    if not contacts:
        return Decomposition([], flags, bound)
    cur = contacts[0][0]
    start = 0.0
    t = contacts[0][1]
    while True:
        later = [c for c in contacts if c[0] != cur and c[1] >= t]
        if not later:
            phases.append(SensingPhase(cur, start, T))
            break
        nxt = min(later, key=lambda c: (c[1], c[0]))
        t_max = nxt[1]
        exits = [c[2] for c in contacts if c[0] == cur and c[1] < t_max]
        end = max(exits) if exits else t_max
        if end > t_max:
            flags.append(f"target {cur} still sensed when target {nxt[0]} is first sensed at t={t_max:.6g}")
            end = t_max
        phases.append(SensingPhase(cur, start, end))
        cur, start, t = nxt[0], end, t_max
    return Decomposition(phases, flags, bound)


def _length_bound(scenario: Scenario, agent: int) -> int | None:
    # sensing two different targets needs a gap of at least margin/2 in time
    # (unit agent speed, target speed <= 1), hence at most ceil(T / (margin/2)) phases
    margin = scenario.separation_margin
    if margin <= 0:
        return None
    return int(math.ceil(scenario.horizon / (0.5 * margin)))


# ---------------------------------------------------------------------------
# single-interval canonicalization


@dataclass
class CanonicalPlan:
    t1: float
    t2: float
    gamma1: float
    gamma2: float
    arrival: float       # earliest full-speed arrival at the target
    departure: float     # latest departure reaching s(t2) at full speed
    t_check: float       # start of velocity matching
    t_hat: float         # end of velocity matching
    tracking: bool


def _sgn(x: float) -> float:
    return float(x > 0) - float(x < 0)


def _first_root(f, a: float, b: float, n: int) -> float | None:
    """Earliest t in [a, b] with f(t) >= 0 (f(a) < 0 assumed), by grid scan then bisection."""
    grid = np.linspace(a, b, max(n, 1) + 1)
    prev = grid[0]
    for t in grid[1:]:
        if f(t) >= 0:
            lo, hi = prev, t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if f(mid) >= 0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    return None


def plan_interval(scenario: Scenario, agent: int, target: int, t1: float, t2: float,
                  s1: float, s2: float, resolution: int = 1000) -> CanonicalPlan:
    """Switching times of the three-phase law on ``[t1, t2]`` from ``s(t1)=s1`` to ``s(t2)=s2``."""
    traj = scenario.targets[target].trajectory
    th1, th2 = traj.position_at(t1), traj.position_at(t2)
    g1 = _sgn(th1 - s1)
    g2 = _sgn(s2 - th2)
    if g1 == 0:
        arrival = t1
    else:
        arrival = _first_root(lambda t: g1 * (s1 + g1 * (t - t1) - traj.position_at(t)), t1, t2, resolution)
    if g2 == 0:
        departure = t2
    else:
        # latest t with theta(t) + g2 (t2 - t) = s2, scanning backwards
        root = _first_root(lambda tau: g2 * (traj.position_at(t2 - tau) + g2 * tau - s2),
                           0.0, t2 - t1, resolution)
        departure = None if root is None else t2 - root
    if arrival is not None and departure is not None and arrival <= departure:
        return CanonicalPlan(t1, t2, g1, g2, arrival, departure, arrival, departure, True)
    gam = g1 if g1 != 0 else (_sgn(s2 - s1) or 1.0)
    t_turn = 0.5 * (gam * (s2 - s1) + t1 + t2)
    t_turn = min(max(t_turn, t1), t2)
    return CanonicalPlan(t1, t2, g1, g2, math.inf if arrival is None else arrival,
                         -math.inf if departure is None else departure, t_turn, t_turn, False)


def _planned_position(plan: CanonicalPlan, traj, s1: float, s2: float, t: float) -> float:
    if plan.tracking:
        if t <= plan.t_check:
            return s1 + plan.gamma1 * (t - plan.t1)
        if t <= plan.t_hat:
            return traj.position_at(t)
        return s2 - plan.gamma2 * (plan.t2 - t)
    gam = plan.gamma1 if plan.gamma1 != 0 else (_sgn(s2 - s1) or 1.0)
    if t <= plan.t_check:
        return s1 + gam * (t - plan.t1)
    return s2 + gam * (plan.t2 - t)


def canonicalize_interval(u: SampledControl, agent: int, target: int, t1: float, t2: float,
                          scenario: Scenario, options: SimOptions | None = None):
    """Replace ``u`` on ``(t1, t2)`` by full speed toward the target, velocity matching,
    and full speed to the original end position.

    The interval is shrunk to grid nodes (one more cell when the target sits
    exactly at sensing range at an endpoint).  Returns ``(u_prime, plan)``.
    """
    dt = u.grid_step
    r = scenario.agents[agent].sensing_range
    traj = scenario.targets[target].trajectory
    k1 = int(math.ceil(t1 / dt - 1e-9))
    k2 = int(math.floor(t2 / dt + 1e-9))
    k2 = min(k2, u.n_cells)
    s_nodes = u.positions(agent, scenario.agents[agent].initial_position)
    times = u.node_times()
    if k1 < k2 and abs(abs(traj.position_at(times[k1]) - s_nodes[k1]) - r) <= 1e-12:
        k1 += 1
    if k1 < k2 and abs(abs(traj.position_at(times[k2]) - s_nodes[k2]) - r) <= 1e-12:
        k2 -= 1
    if k2 - k1 < 1:
        raise CanonicalizationError("interval shorter than one grid cell")
    a, b = times[k1], times[k2]

    dec = decompose_sensing_sequence(u, scenario, agent, options)
    if not any(p.target == target and p.start <= a + 1e-9 and b <= p.end + 1e-9 for p in dec.phases):
        raise CanonicalizationError(
            f"agent {agent} does not sense only target {target} on ({a:.6g}, {b:.6g})")
    for c_target, c_in, c_out in sensing_intervals(u, scenario, agent, options):
        if c_target != target and c_in < b and c_out > a:
            raise CanonicalizationError(f"target {c_target} is also sensed on ({a:.6g}, {b:.6g})")

    s1, s2 = s_nodes[k1], s_nodes[k2]
    plan = plan_interval(scenario, agent, target, a, b, s1, s2, resolution=max(k2 - k1, 1))
    new_nodes = np.array([_planned_position(plan, traj, s1, s2, t) for t in times[k1:k2 + 1]])
    new_nodes[0], new_nodes[-1] = s1, s2
    vals = u.values.copy()
    vals[agent, k1:k2] = np.clip(np.diff(new_nodes) / dt, -1.0, 1.0)
    return SampledControl(vals, dt), plan


@dataclass
class ImprovementCheck:
    cost: float
    cost_prime: float
    improved: bool

    def __iter__(self):
        return iter((self.cost, self.cost_prime, self.improved))


def verify_improvement(u: SampledControl, u_prime: SampledControl, scenario: Scenario,
                       options: SimOptions | None = None, tol: float = 1e-9) -> ImprovementCheck:
    J = simulate(scenario, u, options).cost
    Jp = simulate(scenario, u_prime, options).cost
    return ImprovementCheck(J, Jp, Jp <= J + tol)


def distance_domination(u: SampledControl, u_prime: SampledControl, scenario: Scenario,
                        agent: int, target: int, t1: float, t2: float, slack: float | None = None) -> bool:
    """``|theta - s'| <= |theta - s| + slack`` at every grid node in ``[t1, t2]``."""
    slack = slack if slack is not None else u.grid_step
    s0 = scenario.agents[agent].initial_position
    s, sp = u.positions(agent, s0), u_prime.positions(agent, s0)
    times = u.node_times()
    sel = (times >= t1 - 1e-12) & (times <= t2 + 1e-12)
    traj = scenario.targets[target].trajectory
    th = np.array([traj.position_at(t) for t in times[sel]])
    return bool(np.all(np.abs(th - sp[sel]) <= np.abs(th - s[sel]) + slack))
