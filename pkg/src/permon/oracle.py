"""Independent checks: finite differences, dense fixed-step reference, experiment harnesses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernel as K
from . import controllers as ctl
from . import targets as tg
from .model import AgentSpec, Scenario, TargetSpec
from .optimizer import DescentConfig, optimize
from .simulator import MeasurementNoise, SimOptions, simulate


# ---------------------------------------------------------------------------
# finite differences


@dataclass
class FiniteDiffResult:
    gradient: np.ndarray
    comparable: np.ndarray     # False where a +/- probe changed the event sequence
    names: list[str]


def finite_diff_gradient(scenario: Scenario, params: ctl.ControllerParams, h: float = 1e-5,
                         options: SimOptions | None = None,
                         noise: MeasurementNoise | None = None) -> FiniteDiffResult:
    """Central differences of ``J`` per parameter, probing each coordinate independently
    (so ``alpha`` probes leave the simplex)."""
    if not h > 0:
        raise ValueError("h must be > 0")
    M = scenario.n_targets
    opts = options or SimOptions()
    opts = SimOptions(opts.step, opts.event_tolerance, opts.max_events, record=False)
    base = simulate(scenario, params, opts, noise)
    sig = base.event_signature()
    theta = ctl.to_vector(params, M)
    grad = np.zeros(theta.size)
    ok = np.ones(theta.size, dtype=bool)
    for d in range(theta.size):
        vals = []
        for sgn in (1.0, -1.0):
            th = theta.copy()
            th[d] += sgn * h
            out = simulate(scenario, ctl.from_vector(params, th, M), opts, noise, check=False)
            vals.append(out.cost)
            if out.event_signature() != sig:
                ok[d] = False
        grad[d] = (vals[0] - vals[1]) / (2.0 * h)
    return FiniteDiffResult(grad, ok, ctl.ParamLayout(params, M).names())


def gradient_agreement(ipa_grad: np.ndarray, fd: FiniteDiffResult, rtol: float = 1e-3,
                       atol: float = 1e-6) -> tuple[bool, np.ndarray]:
    """Per-component agreement; masked components count as agreeing."""
    diff = np.abs(ipa_grad - fd.gradient)
    good = (diff <= atol) | (diff <= rtol * np.abs(fd.gradient)) | ~fd.comparable
    return bool(np.all(good)), good


# ---------------------------------------------------------------------------
# dense reference


def dense_reference_cost(scenario: Scenario, params: ctl.ControllerParams, dt: float = 1e-5) -> float:
    """Cost from a plain fixed-step integration that re-decides every switch at step starts."""
    N, M = scenario.n_agents, scenario.n_targets
    L = max(a.n_phases for a in params.agents)
    psi = np.zeros((N, L))
    alpha = np.zeros((N, L, M))
    phi = np.zeros((N, L))
    nph = np.array([a.n_phases for a in params.agents], dtype=np.int64)
    gains = np.zeros((N, 3))
    for j, a in enumerate(params.agents):
        for l in range(a.n_phases):
            alpha[j, l] = a.combinations[l].weights
            phi[j, l] = a.durations[l]
            if params.variant == ctl.OPTIMAL:
                psi[j, l] = a.switching_points[l]
        if params.variant == ctl.PRACTICAL:
            gains[j] = (a.gain_p, a.gain_i, a.switch_tolerance)
    tkind, tpar, wpt, wpx, wpoff = tg.pack([t.trajectory for t in scenario.targets])
    return float(K.dense_cost(
        scenario.horizon, dt,
        np.array([a.initial_position for a in scenario.agents]),
        np.array([a.sensing_range for a in scenario.agents]),
        np.array([t.growth_rate for t in scenario.targets]),
        np.array([t.reduction_rate for t in scenario.targets]),
        np.array([t.initial_uncertainty for t in scenario.targets]),
        tkind, tpar, wpt, wpx, wpoff,
        0 if params.variant == ctl.OPTIMAL else 1, psi, alpha, phi, nph, gains))


# ---------------------------------------------------------------------------
# randomized instances


def random_trajectory(rng: np.random.Generator, T: float, span: float, max_speed: float = 0.9,
                      mobile: bool = False):
    kind = rng.integers(1, 3) if mobile else rng.integers(3)
    if kind == 0:
        return tg.Static(float(rng.uniform(0, span)))
    if kind == 1:
        amp = float(rng.uniform(0.2, 0.25 * span))
        w = float(rng.uniform(0.1, max_speed / amp))
        return tg.Sinusoid(float(rng.uniform(amp, span - amp)), amp, w, float(rng.uniform(0, 2 * math.pi)))
    n = int(rng.integers(2, 5))
    times = np.sort(rng.uniform(0, T, n - 1))
    times = np.concatenate([[0.0], times, [T]])
    x = [float(rng.uniform(0, span))]
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        step = rng.uniform(-max_speed, max_speed) * dt
        x.append(float(np.clip(x[-1] + step, 0.0, span)))
    return tg.PiecewiseLinear(tuple(zip(times.tolist(), x)))


def random_scenario(rng: np.random.Generator, n_agents: int, n_targets: int, horizon: float,
                    span: float | None = None, mobile: bool = False) -> Scenario:
    """Random instance; ``mobile`` excludes static targets."""
    span = span if span is not None else 3.0 * n_targets
    agents = [AgentSpec(float(rng.uniform(0, span)), float(rng.uniform(0.8, 2.0))) for _ in range(n_agents)]
    tgts = []
    for _ in range(n_targets):
        A = float(rng.uniform(0.2, 1.0))
        tgts.append(TargetSpec(A, float(A * rng.uniform(2.0, 6.0)), float(rng.uniform(0.0, 3.0)),
                               random_trajectory(rng, horizon, span, mobile=mobile)))
    return Scenario(tuple(agents), tuple(tgts), horizon)


def random_params(rng: np.random.Generator, scenario: Scenario, variant: str, n_phases: int,
                  interior: bool = True) -> ctl.ControllerParams:
    """Random parameters; ``interior`` draws strictly positive weights and durations."""
    M, T = scenario.n_targets, scenario.horizon
    lo = min(min(t.trajectory.position_at(0.0) for t in scenario.targets),
             min(a.initial_position for a in scenario.agents))
    hi = max(max(t.trajectory.position_at(0.0) for t in scenario.targets),
             max(a.initial_position for a in scenario.agents))
    agents = []
    for _ in range(scenario.n_agents):
        combos = [tuple(rng.dirichlet(np.ones(M)) if interior else np.eye(M)[rng.integers(M)])
                  for _ in range(n_phases)]
        durs = tuple(float(x) for x in rng.uniform(0.1, 0.5, n_phases) * T / n_phases)
        if variant == ctl.OPTIMAL:
            psis = tuple(float(x) for x in rng.uniform(lo, hi, n_phases))
            agents.append(ctl.OptimalAgentParams(psis, combos, durs))
        else:
            agents.append(ctl.PracticalAgentParams(combos, durs))
    return ctl.ControllerParams(variant, tuple(agents))


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class NoiseModel:
    position_noise_scale: float = 0.0
    velocity_noise_scale: float = 0.0
    sample_interval: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.position_noise_scale < 0 or self.velocity_noise_scale < 0:
            raise ValueError("noise scales must be nonnegative")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be > 0")

    def realize(self, n_targets: int, horizon: float, rng: np.random.Generator) -> MeasurementNoise | None:
        """One held standard-normal stream per target, shared by position and velocity estimates."""
        if self.position_noise_scale == 0 and self.velocity_noise_scale == 0:
            return None
        cells = int(math.ceil(horizon / self.sample_interval - 1e-9))
        return MeasurementNoise(rng.standard_normal((n_targets, max(cells, 1))), self.sample_interval,
                                self.position_noise_scale, self.velocity_noise_scale)


@dataclass
class ExperimentReport:
    kind: str
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)


def _stats(x: np.ndarray) -> dict:
    return {"mean": float(np.mean(x)), "median": float(np.median(x)),
            "q10": float(np.quantile(x, 0.1)), "q90": float(np.quantile(x, 0.9)),
            "min": float(np.min(x)), "max": float(np.max(x))}


def run_noise_experiment(scenario: Scenario, noise: NoiseModel, repetitions: int = 50,
                         n_phases: int = 4, config: DescentConfig | None = None,
                         init_sampler: Callable | None = None,
                         progress: Callable[[int], None] | None = None) -> ExperimentReport:
    """Optimize both laws from the same random visiting sequences under measurement noise.

    Each repetition draws one visiting sequence per agent and one noise
    realization; both laws start from that sequence and see the same noise.
    Costs are true costs of the closed loop driven by noisy measurements.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    config = config or DescentConfig(max_iterations=30)
    seeds = np.random.SeedSequence(noise.seed).spawn(repetitions)
    N, M, T = scenario.n_agents, scenario.n_targets, scenario.horizon
    rows = []
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        seqs = ctl.random_sequences(rng, N, M, n_phases)
        realized = noise.realize(M, T, rng)
        row = [k]
        for variant in (ctl.PRACTICAL, ctl.OPTIMAL):
            p0 = (init_sampler(scenario, variant, seqs) if init_sampler is not None
                  else ctl.params_from_sequences(scenario, variant, seqs))
            _, recs = optimize(scenario, p0, config, realized)
            row += [recs[0].cost, recs[-1].cost, len(recs) - 1]
        rows.append(row)
        if progress:
            progress(k)
    cols = ["repetition", "practical_initial", "practical_optimized", "practical_iterations",
            "optimal_initial", "optimal_optimized", "optimal_iterations"]
    rep = ExperimentReport("noise", cols, rows)
    for c in cols[1:]:
        if "iterations" not in c:
            rep.summary[c] = _stats(rep.column(c))
    s = rep.summary
    rep.checks = {
        "practical_not_worse_than_optimal": s["practical_optimized"]["mean"] <= s["optimal_optimized"]["mean"],
        "practical_improves": s["practical_optimized"]["mean"] < s["practical_initial"]["mean"],
        "optimal_improves": s["optimal_optimized"]["mean"] < s["optimal_initial"]["mean"],
    }
    return rep


def deadzone_exists(scenario: Scenario, position: float, t: float = 0.0) -> bool:
    """True when an agent parked at ``position`` makes every target's rate nonpositive."""
    pos = scenario.target_positions(t)
    for i, tgt in enumerate(scenario.targets):
        q = 1.0
        for a in scenario.agents:
            q *= 1.0 - max(0.0, 1.0 - abs(pos[i] - position) / a.sensing_range)
        if tgt.growth_rate - tgt.reduction_rate * (1.0 - q) > 0:
            return False
    return True


def run_deadzone_experiment(scenario: Scenario, initial: ctl.ControllerParams,
                            config: DescentConfig | None = None, window: float = 0.2,
                            zero_tol: float = 1e-9) -> ExperimentReport:
    """Optimize a mixed-weight law for one agent between two close targets and check the
    trailing window of the horizon for zero uncertainty; a single-target vertex
    baseline is optimized alongside."""
    config = config or DescentConfig(max_iterations=60)
    T = scenario.horizon
    final, recs = optimize(scenario, initial, config)
    sim = simulate(scenario, final, config.sim_options)
    tail = sim.time >= (1.0 - window) * T
    tail_max = float(sim.uncertainty[tail].max())

    rows = [["mixed", recs[0].cost, recs[-1].cost, tail_max]]
    vertex_costs = []
    M = scenario.n_targets
    for i in range(M):
        agents = []
        for a in initial.agents:
            combos = tuple(ctl.TrackingCombination.vertex(i, M) for _ in a.combinations)
            if initial.variant == ctl.OPTIMAL:
                agents.append(ctl.OptimalAgentParams(a.switching_points, combos, a.durations))
            else:
                agents.append(ctl.PracticalAgentParams(combos, a.durations, a.gain_p, a.gain_i,
                                                       a.switch_tolerance))
        base = ctl.ControllerParams(initial.variant, tuple(agents))
        bfinal, brecs = optimize(scenario, base, config, freeze_alpha=True)
        bsim = simulate(scenario, bfinal, config.sim_options)
        rows.append([f"vertex_{i}", brecs[0].cost, brecs[-1].cost,
                     float(bsim.uncertainty[bsim.time >= (1.0 - window) * T].max())])
        vertex_costs.append(brecs[-1].cost)
    rep = ExperimentReport("deadzone", ["run", "initial_cost", "optimized_cost", "tail_max_uncertainty"], rows)
    rep.summary = {"mixed_final_cost": recs[-1].cost, "tail_max_uncertainty": tail_max,
                   "best_vertex_cost": min(vertex_costs), "final_params": final}
    rep.checks = {"held_at_zero": tail_max <= zero_tol,
                  "mixed_beats_vertex": recs[-1].cost < min(vertex_costs)}
    return rep


def run_static_experiment(scenario: Scenario, sequence_sets, config: DescentConfig | None = None,
                          gain_p: float = ctl.DEFAULT_GAIN_P, gain_i: float = ctl.DEFAULT_GAIN_I,
                          switch_tolerance: float = ctl.DEFAULT_SWITCH_TOLERANCE,
                          gap_limit: float = 0.10) -> ExperimentReport:
    """Optimize both laws on a static-target scenario from the same visiting sequences.

    ``sequence_sets`` lists starting points, each one visiting sequence per
    agent.  Both laws run from every start and the best result of each is compared.
    """
    if not sequence_sets:
        raise ValueError("need at least one set of visiting sequences")
    config = config or DescentConfig(max_iterations=100)
    rows, best = [], {}
    for variant in (ctl.OPTIMAL, ctl.PRACTICAL):
        for k, seqs in enumerate(sequence_sets):
            p0 = ctl.params_from_sequences(scenario, variant, seqs, gain_p, gain_i, switch_tolerance)
            final, recs = optimize(scenario, p0, config)
            rows.append([variant, k, recs[0].cost, recs[-1].cost, len(recs) - 1])
            if variant not in best or recs[-1].cost < best[variant][0]:
                best[variant] = (recs[-1].cost, final)
    J_opt, J_pr = best[ctl.OPTIMAL][0], best[ctl.PRACTICAL][0]
    gap = abs(J_pr - J_opt) / min(J_pr, J_opt)
    rep = ExperimentReport("static", ["variant", "start", "initial_cost", "optimized_cost", "iterations"], rows)
    rep.summary = {"optimal_cost": J_opt, "practical_cost": J_pr, "relative_gap": gap,
                   "final_params": {v: b[1] for v, b in best.items()}}
    rep.checks = {"gap_within_limit": gap <= gap_limit}
    return rep
