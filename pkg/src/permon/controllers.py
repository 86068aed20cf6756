"""Parametric control laws: the switching-point/velocity-matching law and the saturated PI law."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9

OPTIMAL = "optimal"
PRACTICAL = "practical"
VARIANTS = (OPTIMAL, PRACTICAL)

DEFAULT_GAIN_P = 5.0
DEFAULT_GAIN_I = 1.0
DEFAULT_SWITCH_TOLERANCE = 0.1


def sgn(x: float) -> float:
    return float(x > 0) - float(x < 0)


@dataclass(frozen=True)
class TrackingCombination:
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def violations(self) -> list[str]:
        out = []
        w = self.as_array()
        if np.any(w < -SIMPLEX_TOL) or np.any(w > 1 + SIMPLEX_TOL):
            out.append(f"weights {list(w)} outside [0, 1]")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            out.append(f"weights {list(w)} sum to {w.sum():.12g}, not 1")
        return out

    @classmethod
    def vertex(cls, i: int, m: int) -> "TrackingCombination":
        w = [0.0] * m
        w[i] = 1.0
        return cls(tuple(w))


def _combos(items) -> tuple[TrackingCombination, ...]:
    return tuple(c if isinstance(c, TrackingCombination) else TrackingCombination(tuple(c))
                 for c in items)


@dataclass(frozen=True)
class OptimalAgentParams:
    switching_points: tuple[float, ...]
    combinations: tuple[TrackingCombination, ...]
    durations: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "switching_points", tuple(float(x) for x in self.switching_points))
        object.__setattr__(self, "combinations", _combos(self.combinations))
        object.__setattr__(self, "durations", tuple(float(x) for x in self.durations))

    @property
    def n_phases(self) -> int:
        return len(self.durations)


@dataclass(frozen=True)
class PracticalAgentParams:
    combinations: tuple[TrackingCombination, ...]
    durations: tuple[float, ...]
    gain_p: float = DEFAULT_GAIN_P
    gain_i: float = DEFAULT_GAIN_I
    switch_tolerance: float = DEFAULT_SWITCH_TOLERANCE

    def __post_init__(self):
        object.__setattr__(self, "combinations", _combos(self.combinations))
        object.__setattr__(self, "durations", tuple(float(x) for x in self.durations))

    @property
    def n_phases(self) -> int:
        return len(self.durations)


@dataclass(frozen=True)
class ControllerParams:
    variant: str
    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}")
        want = OptimalAgentParams if self.variant == OPTIMAL else PracticalAgentParams
        for a in self.agents:
            if not isinstance(a, want):
                raise TypeError(f"{self.variant} controller needs {want.__name__}, got {type(a).__name__}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)


# ---------------------------------------------------------------------------
# flat parameter vector


class ParamLayout:
    """Index map between ``ControllerParams`` and a flat vector ``theta``.

    Per agent and phase the order is ``[psi, alpha_1..alpha_M, phi]`` for the
    optimal variant and ``[alpha_1..alpha_M, phi]`` for the practical one.
    """

    def __init__(self, params: ControllerParams, n_targets: int):
        self.variant = params.variant
        self.n_targets = n_targets
        self.psi: list[np.ndarray] = []
        self.alpha: list[np.ndarray] = []
        self.phi: list[np.ndarray] = []
        self.agent_slices: list[slice] = []
        d = 0
        has_psi = params.variant == OPTIMAL
        for a in params.agents:
            L = a.n_phases
            start = d
            psi = np.full(L, -1, dtype=np.int64)
            alpha = np.full((L, n_targets), -1, dtype=np.int64)
            phi = np.full(L, -1, dtype=np.int64)
            for l in range(L):
                if has_psi:
                    psi[l] = d
                    d += 1
                alpha[l] = np.arange(d, d + n_targets)
                d += n_targets
                phi[l] = d
                d += 1
            self.psi.append(psi)
            self.alpha.append(alpha)
            self.phi.append(phi)
            self.agent_slices.append(slice(start, d))
        self.size = d

    def names(self) -> list[str]:
        out = [""] * self.size
        for j in range(len(self.alpha)):
            for l in range(len(self.phi[j])):
                if self.psi[j][l] >= 0:
                    out[self.psi[j][l]] = f"psi[{j}][{l}]"
                for i in range(self.n_targets):
                    out[self.alpha[j][l, i]] = f"alpha[{j}][{l}][{i}]"
                out[self.phi[j][l]] = f"phi[{j}][{l}]"
        return out


def to_vector(params: ControllerParams, n_targets: int) -> np.ndarray:
    lay = ParamLayout(params, n_targets)
    theta = np.zeros(lay.size)
    for j, a in enumerate(params.agents):
        for l in range(a.n_phases):
            if lay.psi[j][l] >= 0:
                theta[lay.psi[j][l]] = a.switching_points[l]
            theta[lay.alpha[j][l]] = a.combinations[l].weights
            theta[lay.phi[j][l]] = a.durations[l]
    return theta


def from_vector(template: ControllerParams, theta: np.ndarray, n_targets: int) -> ControllerParams:
    lay = ParamLayout(template, n_targets)
    theta = np.asarray(theta, dtype=float)
    agents = []
    for j, a in enumerate(template.agents):
        L = a.n_phases
        combos = tuple(TrackingCombination(tuple(theta[lay.alpha[j][l]])) for l in range(L))
        durs = tuple(float(theta[lay.phi[j][l]]) for l in range(L))
        if template.variant == OPTIMAL:
            psis = tuple(float(theta[lay.psi[j][l]]) for l in range(L))
            agents.append(OptimalAgentParams(psis, combos, durs))
        else:
            agents.append(PracticalAgentParams(combos, durs, a.gain_p, a.gain_i, a.switch_tolerance))
    return ControllerParams(template.variant, tuple(agents))


# ---------------------------------------------------------------------------
# optimal parameterization


class Mode(NamedTuple):
    kind: str            # "bang" or "track"
    phase: int
    start: float
    end: float
    direction: float     # bang direction; 0.0 for track
    alpha: tuple[float, ...] | None


def optimal_mode_schedule(agent_state: float, params: OptimalAgentParams,
                          targets: Sequence, T: float) -> Iterator[Mode]:
    """Yield the open-loop mode sequence of one agent over ``[0, T]``.

    Tracking phases are assumed unsaturated, so the agent's position at the end
    of phase ``l`` is ``psi_l + alpha_l . (theta(end) - theta(start))``.  The
    final tracking phase runs until ``T`` regardless of its duration.
    """
    s, t = float(agent_state), 0.0
    L = params.n_phases
    for l in range(L):
        psi = params.switching_points[l]
        direction = sgn(psi - s)
        t_reach = t + abs(psi - s)
        yield Mode("bang", l, t, min(t_reach, T), direction, None)
        if t_reach >= T:
            return
        alpha = params.combinations[l].weights
        t_end = T if l == L - 1 else min(t_reach + params.durations[l], T)
        yield Mode("track", l, t_reach, t_end, 0.0, alpha)
        if t_end >= T:
            return
        s = psi + sum(a * (tr.position_at(t_end) - tr.position_at(t_reach))
                      for a, tr in zip(alpha, targets))
        t = t_end


def optimal_control(mode: Mode, t: float, targets: Sequence) -> float:
    if mode.kind == "bang":
        return mode.direction
    v = sum(a * tr.velocity_at(t) for a, tr in zip(mode.alpha, targets))
    return min(1.0, max(-1.0, v))


# ---------------------------------------------------------------------------
# practical parameterization


class PracticalContext(NamedTuple):
    phase: int
    integrator_active: bool


def practical_control(t: float, agent_pos: float, integrator: float, mode_ctx: PracticalContext,
                      params: PracticalAgentParams, targets: Sequence,
                      target_positions: Sequence[float] | None = None) -> tuple[float, str]:
    """Saturated PI tracking of a convex combination of target positions.

    Returns the control and the implicit mode: ``"bang+"``, ``"bang-"``, ``"P"``
    or ``"PI"``.  ``target_positions`` overrides the true positions (noisy
    measurements).
    """
    alpha = params.combinations[mode_ctx.phase].as_array()
    if target_positions is None:
        target_positions = [tr.position_at(t) for tr in targets]
    e = float(alpha @ np.asarray(target_positions, dtype=float)) - agent_pos
    v = params.gain_p * e
    if mode_ctx.integrator_active:
        v += params.gain_i * integrator
    if v >= 1.0:
        return 1.0, "bang+"
    if v <= -1.0:
        return -1.0, "bang-"
    return v, ("PI" if mode_ctx.integrator_active else "P")


def practical_period_bounds(params: PracticalAgentParams, T: float) -> list[tuple[float, float]]:
    """Tracking periods ``[tbar_{l-1}, tbar_l)``, truncated at ``T``; the last one ends at ``T``."""
    out, t = [], 0.0
    L = params.n_phases
    for l in range(L):
        end = T if l == L - 1 else min(t + params.durations[l], T)
        out.append((t, end))
        if end >= T:
            break
        t = end
    return out


# ---------------------------------------------------------------------------
# validation and initialization


def validate_params(params: ControllerParams, scenario) -> list[str]:
    errs = []
    T = scenario.horizon
    M = scenario.n_targets
    if params.n_agents != scenario.n_agents:
        errs.append(f"{params.n_agents} agent parameter sets for {scenario.n_agents} agents")
    for j, a in enumerate(params.agents):
        L = a.n_phases
        if L < 1:
            errs.append(f"agent {j}: needs at least one phase")
        if len(a.combinations) != L:
            errs.append(f"agent {j}: {len(a.combinations)} combinations for {L} durations")
        if params.variant == OPTIMAL:
            if len(a.switching_points) != L:
                errs.append(f"agent {j}: {len(a.switching_points)} switching points for {L} durations")
            for l, psi in enumerate(a.switching_points):
                if not math.isfinite(psi):
                    errs.append(f"agent {j} phase {l}: switching point not finite")
        else:
            if not a.gain_p > 0:
                errs.append(f"agent {j}: gain_p must be > 0")
            if not a.gain_i > 0:
                errs.append(f"agent {j}: gain_i must be > 0")
            if not 0 < a.switch_tolerance < 1:
                errs.append(f"agent {j}: switch_tolerance must lie in (0, 1)")
        for l, c in enumerate(a.combinations):
            if len(c.weights) != M:
                errs.append(f"agent {j} phase {l}: {len(c.weights)} weights for {M} targets")
                continue
            errs.extend(f"agent {j} phase {l}: simplex violation, {v}" for v in c.violations())
        for l, phi in enumerate(a.durations):
            if not (0.0 <= phi <= T):
                errs.append(f"agent {j} phase {l}: duration {phi} outside [0, {T}]")
    return errs


def _intercept(traj, s: float, t0: float, t_max: float, step: float) -> float | None:
    """Earliest ``t`` in ``[t0, t_max]`` at which a unit-speed agent from ``s`` can meet the target."""
    def gap(t):
        return abs(traj.position_at(t) - s) - (t - t0)

    if gap(t0) <= 0:
        return t0
    n = max(int(math.ceil((t_max - t0) / step)), 1)
    grid = np.linspace(t0, t_max, n + 1)
    prev = grid[0]
    for t in grid[1:]:
        if gap(t) <= 0:
            lo, hi = prev, t
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if gap(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    return None


def params_from_sequences(scenario, variant: str, sequences: Sequence[Sequence[int]],
                          gain_p: float = DEFAULT_GAIN_P, gain_i: float = DEFAULT_GAIN_I,
                          switch_tolerance: float = DEFAULT_SWITCH_TOLERANCE,
                          phase_lengths: Sequence[Sequence[float]] | None = None,
                          approach_offset: float = 0.1) -> ControllerParams:
    """Build parameters that visit the given target sequences, one target per phase.

    By default each of the ``L`` phases of an agent lasts ``T/L``.  For the
    optimal variant the switching points are interception points predicted from
    the known target motion, which is what makes that variant harder to seed.
    Switching points stop ``approach_offset * r`` short of the target: sitting
    exactly on it is a kink of the cost where descent cannot start.
    """
    T = scenario.horizon
    M = scenario.n_targets
    agents = []
    for j, seq in enumerate(sequences):
        L = len(seq)
        lengths = list(phase_lengths[j]) if phase_lengths is not None else [T / L] * L
        combos = tuple(TrackingCombination.vertex(i, M) for i in seq)
        if variant == PRACTICAL:
            agents.append(PracticalAgentParams(combos, tuple(lengths), gain_p, gain_i, switch_tolerance))
            continue
        s = scenario.agents[j].initial_position
        t = 0.0
        psis, durs = [], []
        for l, i in enumerate(seq):
            traj = scenario.targets[i].trajectory
            planned_end = min(t + lengths[l], T)
            t_meet = _intercept(traj, s, t, planned_end, step=max(T * 1e-3, 1e-3))
            if t_meet is None:
                direction = sgn(traj.position_at(planned_end) - s)
                psi = s + direction * (planned_end - t)
                psis.append(psi)
                durs.append(0.0)
                s, t = psi, planned_end
                continue
            psi = traj.position_at(t_meet)
            direction = sgn(psi - s) or 1.0
            psi -= direction * approach_offset * scenario.agents[j].sensing_range
            t_reach = min(t + abs(psi - s), planned_end)
            psis.append(psi)
            durs.append(planned_end - t_reach)
            s = psi + traj.position_at(planned_end) - traj.position_at(t_reach)
            t = planned_end
        agents.append(OptimalAgentParams(tuple(psis), combos, tuple(durs)))
    return ControllerParams(variant, tuple(agents))


def random_sequences(rng: np.random.Generator, n_agents: int, n_targets: int, n_phases: int) -> list[list[int]]:
    """Random visiting sequences with no immediate repeats (when ``M > 1``)."""
    out = []
    for _ in range(n_agents):
        seq = []
        for _ in range(n_phases):
            choices = [i for i in range(n_targets) if not seq or i != seq[-1] or n_targets == 1]
            seq.append(int(rng.choice(choices)))
        out.append(seq)
    return out
