"""Event-driven simulation of the agent/uncertainty hybrid system."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from . import controllers as ctl
from . import ipa
from . import targets as tg
from .model import ZERO_TOL, Scenario, Trajectory, cost as trajectory_cost


class EventKind(str, enum.Enum):
    START = "START"
    SENSE_ENTER = "SENSE_ENTER"
    SENSE_EXIT = "SENSE_EXIT"
    TARGET_PASS = "TARGET_PASS"
    R_HITS_ZERO = "R_HITS_ZERO"
    Z_EXIT = "Z_EXIT"
    REACH_SWITCH_POINT = "REACH_SWITCH_POINT"
    TRACK_PERIOD_END = "TRACK_PERIOD_END"
    SATURATION_CROSS = "SATURATION_CROSS"
    INTEGRATOR_ACTIVATE = "INTEGRATOR_ACTIVATE"
    TARGET_BREAKPOINT = "TARGET_BREAKPOINT"
    NOISE_SAMPLE = "NOISE_SAMPLE"
    CONTROL_SAMPLE = "CONTROL_SAMPLE"
    HORIZON_END = "HORIZON_END"


# exogenous, parameter-independent kinds; excluded from event signatures
EXOGENOUS = frozenset({EventKind.START, EventKind.TARGET_BREAKPOINT, EventKind.NOISE_SAMPLE,
                       EventKind.CONTROL_SAMPLE, EventKind.HORIZON_END})

_KEV_KIND = {K.KEV_TARGET_BREAKPOINT: EventKind.TARGET_BREAKPOINT,
             K.KEV_NOISE_SAMPLE: EventKind.NOISE_SAMPLE,
             K.KEV_CONTROL_SAMPLE: EventKind.CONTROL_SAMPLE}


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    agent: int | None = None
    target: int | None = None
    phase: int | None = None

    def signature(self):
        return (self.kind.value, self.agent, self.target, self.phase)


class ZenoError(RuntimeError):
    """Raised when the event count exceeds the configured cap."""


@dataclass(frozen=True)
class SimOptions:
    step: float | None = None
    event_tolerance: float | None = None
    max_events: int = 10 ** 6
    record: bool = True

    def resolve(self, horizon: float) -> tuple[float, float]:
        h = self.step if self.step is not None else min(1e-3 * horizon, 1e-2)
        tol = self.event_tolerance if self.event_tolerance is not None else 1e-9 * horizon
        if not h > 0 or not tol > 0:
            raise ValueError("step and event_tolerance must be positive")
        return float(h), float(tol)


@dataclass(frozen=True)
class MeasurementNoise:
    """Sampled-and-held measurement noise: ``samples[i, k]`` applies on
    ``[k*dt, (k+1)*dt)``; positions get ``position_scale * samples``, velocities
    ``velocity_scale * samples``."""

    samples: np.ndarray
    sample_interval: float
    position_scale: float = 0.0
    velocity_scale: float = 0.0


@dataclass(frozen=True)
class OpenLoopControl:
    """Piecewise-constant control per agent on a uniform grid over ``[0, T]``."""

    values: np.ndarray       # (N, cells), entries in [-1, 1]
    grid_step: float

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]


@dataclass
class SimOutput:
    time: np.ndarray
    positions: np.ndarray
    uncertainty: np.ndarray
    control: np.ndarray
    target_positions: np.ndarray
    uncertainty_rate: np.ndarray
    integrator: np.ndarray
    events: list
    cost: float
    horizon: float
    options: SimOptions
    noise: MeasurementNoise | None = None
    gradient: np.ndarray | None = None
    gradient_checkpoints: np.ndarray | None = None
    checkpoint_events: list = field(default_factory=list)
    agent_sensed: list = field(default_factory=list)
    final_sensitivity: ipa.SensitivityState | None = None
    min_uncertainty: float = math.nan     # smallest R_i over every integration step

    def trajectory(self) -> Trajectory:
        return Trajectory(self.time, self.uncertainty, self.uncertainty_rate, self.horizon)

    def event_signature(self) -> tuple:
        return tuple(e.signature() for e in self.events if e.kind not in EXOGENOUS)

    @property
    def n_events(self) -> int:
        return len(self.events)


@dataclass
class HybridState:
    time: float
    agent_positions: np.ndarray
    uncertainties: np.ndarray
    integrators: np.ndarray
    agent_modes: list
    zero_set: np.ndarray


def _sgn(x: float) -> float:
    return float(x > 0) - float(x < 0)


class Simulation:
    """One run of the hybrid system; owns all mutable run state."""

    def __init__(self, scenario: Scenario, params, options: SimOptions | None = None,
                 noise: MeasurementNoise | None = None, sensitivities: bool = False,
                 check: bool = True):
        self.scenario = scenario
        self.params = params
        self.options = options or SimOptions()
        self.noise = noise
        self.T = scenario.horizon
        self.h, self.tol = self.options.resolve(self.T)
        N, M = scenario.n_agents, scenario.n_targets
        self.N, self.M = N, M
        self.open_loop = isinstance(params, OpenLoopControl)
        if self.open_loop:
            if params.n_agents != N:
                raise ValueError("open-loop control has wrong agent count")
            self.layout = None
            self.D = 0
        else:
            errs = ctl.validate_params(params, scenario) if check else []
            if errs:
                raise ValueError("; ".join(errs))
            self.layout = ctl.ParamLayout(params, M)
            self.D = self.layout.size if sensitivities else 0
        D = self.D

        r = np.array([a.sensing_range for a in scenario.agents])
        A = np.array([t.growth_rate for t in scenario.targets])
        B = np.array([t.reduction_rate for t in scenario.targets])
        tkind, tpar, wpt, wpx, wpoff = tg.pack([t.trajectory for t in scenario.targets])
        if noise is not None:
            nu = np.ascontiguousarray(noise.samples, dtype=float)
            npar = np.array([noise.sample_interval, noise.position_scale, noise.velocity_scale])
        else:
            nu = np.zeros((M, 0))
            npar = np.array([1.0, 0.0, 0.0])
        if self.open_loop:
            olu = np.ascontiguousarray(params.values, dtype=float)
            olpar = np.array([params.grid_step])
        else:
            olu = np.zeros((N, 0))
            olpar = np.array([1.0])
        self.mdl = (r, A, B, tkind, tpar, wpt, wpx, wpoff, nu, npar, olu, olpar)
        self.r, self.A, self.B = r, A, B

        self.amode = np.zeros(N, dtype=np.int64)
        self.adir = np.zeros(N)
        self.asat = np.zeros(N, dtype=np.int64)
        self.aact = np.zeros(N, dtype=np.int64)
        self.gains = np.zeros((N, 3))
        self.alpha = np.zeros((N, M))
        self.aidx = np.full((N, M), -1, dtype=np.int64)
        self.inz = np.zeros(M, dtype=np.int64)
        self.inside = np.zeros((M, N), dtype=np.int64)
        self.side = np.ones((M, N))
        self.modes = (self.amode, self.adir, self.asat, self.aact, self.gains, self.alpha,
                      self.aidx, self.inz, self.inside, self.side)

        self.n_base = 2 * N + M
        self.x = np.zeros(self.n_base * (1 + D))
        self.x[:N] = [a.initial_position for a in scenario.agents]
        self.x[N:N + M] = [t.initial_uncertainty for t in scenario.targets]
        self.acc = np.zeros(2 + D)
        self.acc[-1] = self.x[N:N + M].min()
        self.t = 0.0

        self.phase = [0] * N
        self.stage = [""] * N
        self.next_time = [math.inf] * N
        self.tau_prev = [np.zeros(D) for _ in range(N)]
        self.t_tilde = [math.nan] * N
        self.agent_sensed = [False] * N
        self.at_breakpoint = False

        self.events: list[Event] = []
        self.checkpoints: list[np.ndarray] = []
        self.checkpoint_events: list[int] = []

        self._build_breakpoints()
        self.bp_ptr = 0
        self.nG = 2 * M * N + M + 2 * N
        self.G = np.zeros(self.nG)
        self.rows = np.zeros((0, 1 + 3 * N + 3 * M))
        self.nrec = 0
        self.kev = np.zeros((64, 3))
        self._initialize()

    # -- setup ---------------------------------------------------------------

    def _build_breakpoints(self):
        T = self.T
        items = []
        for i, tgt in enumerate(self.scenario.targets):
            for b in tgt.trajectory.breakpoints():
                if 0 < b < T:
                    items.append((b, K.KEV_TARGET_BREAKPOINT, i))
        if self.noise is not None:
            dt = self.noise.sample_interval
            n = int(math.ceil(T / dt - 1e-9))
            items.extend((k * dt, K.KEV_NOISE_SAMPLE, -1) for k in range(1, n) if k * dt < T)
        if self.open_loop:
            dt = self.params.grid_step
            n = self.params.values.shape[1]
            items.extend((k * dt, K.KEV_CONTROL_SAMPLE, -1) for k in range(1, n) if k * dt < T)
        items.sort(key=lambda it: (it[0], it[1], it[2]))
        self.bp_t = np.array([it[0] for it in items], dtype=float)
        self.bp_kind = np.array([it[1] for it in items], dtype=np.int64)
        self.bp_idx = np.array([it[2] for it in items], dtype=np.int64)

    def _eval(self, t: float, left: bool = False):
        N, M = self.N, self.M
        n = self.x.size
        dx = np.empty(n)
        u, v, e = np.empty(N), np.empty(N), np.empty(N)
        tp, tv, P = np.empty(M), np.empty(M), np.empty(M)
        pm = np.empty((M, N))
        off = 1e-6 * self.h
        tref = t - off if left else t + off
        K.evaluate(t, tref, self.x, self.D, self.mdl, self.modes, dx, u, v, e, tp, tv, P, pm)
        return dict(dx=dx, u=u, v=v, e=e, tp=tp, tv=tv, P=P, tref=tref)

    def _noise_pos(self, tref: float) -> np.ndarray:
        if self.noise is None:
            return np.zeros(self.M)
        nu = self.noise.samples
        k = min(max(int(tref / self.noise.sample_interval), 0), nu.shape[1] - 1)
        return self.noise.position_scale * nu[:, k]

    def _sens(self) -> ipa.SensitivityState | None:
        if self.D == 0:
            return None
        return ipa.SensitivityState.unpack(self.x[self.n_base:], self.N, self.M, self.D)

    def _store_sens(self, sens: ipa.SensitivityState | None):
        if sens is not None:
            self.x[self.n_base:] = sens.pack()

    def _log(self, kind, agent=None, target=None, phase=None, t=None):
        self.events.append(Event(self.t if t is None else t, kind, agent, target, phase))
        if len(self.events) > self.options.max_events:
            raise ZenoError(f"more than {self.options.max_events} events; chattering suspected")

    def _initialize(self):
        N, M = self.N, self.M
        self._log(EventKind.START)
        tp = np.array([tgt.trajectory.position_at(0.0) for tgt in self.scenario.targets])
        tv = np.array([tgt.trajectory.velocity_at(0.0) for tgt in self.scenario.targets])
        for i in range(M):
            for j in range(N):
                d = tp[i] - self.x[j]
                if abs(d) < self.r[j]:
                    self.inside[i, j] = 1
                    self.agent_sensed[j] = True
                self.side[i, j] = _sgn(d) or (_sgn(tv[i]) or 1.0)
        for j in range(N):
            if self.open_loop:
                self.amode[j] = K.OPEN_LOOP
                self.stage[j] = "open"
                continue
            a = self.params.agents[j]
            if self.params.variant == ctl.OPTIMAL:
                self._begin_bang(j, 0)
            else:
                self.gains[j] = (a.gain_p, a.gain_i, a.switch_tolerance)
                self._begin_period(j, 0)
                if self.aact[j]:
                    self._log(EventKind.INTEGRATOR_ACTIVATE, agent=j, phase=0)
        ev = self._eval(0.0)
        for i in range(M):
            if self.x[N + i] <= ZERO_TOL and self.A[i] < self.B[i] * ev["P"][i]:
                self.x[N + i] = 0.0
                self.inz[i] = 1
        self._process_schedule()

    # -- controller runtimes -------------------------------------------------

    def _begin_bang(self, j: int, l: int):
        psi = self.params.agents[j].switching_points[l]
        s = self.x[j]
        direction = _sgn(psi - s)
        self.phase[j] = l
        self.stage[j] = "bang"
        self.amode[j] = K.BANG
        self.adir[j] = direction
        self.asat[j] = 0
        self.aidx[j] = -1
        self.next_time[j] = self.t + abs(psi - s)

    def _set_sat(self, j: int):
        v = self._eval(self.t)["v"][j]
        self.asat[j] = 0 if abs(v) <= 1.0 else int(_sgn(v))

    def _begin_track(self, j: int, l: int):
        a = self.params.agents[j]
        self.stage[j] = "track"
        self.amode[j] = K.TRACK
        self.alpha[j] = a.combinations[l].weights
        if self.D:
            self.aidx[j] = self.layout.alpha[j][l]
        self._set_sat(j)
        last = l == a.n_phases - 1
        self.next_time[j] = math.inf if last else self.t + a.durations[l]

    def _begin_period(self, j: int, l: int):
        a = self.params.agents[j]
        self.phase[j] = l
        self.stage[j] = "pi"
        self.amode[j] = K.PI_TRACK
        self.alpha[j] = a.combinations[l].weights
        if self.D:
            self.aidx[j] = self.layout.alpha[j][l]
        self.x[self.N + self.M + j] = 0.0
        self.aact[j] = 0
        self.asat[j] = 0
        ev = self._eval(self.t)
        if abs(a.gain_p * ev["e"][j]) <= a.switch_tolerance:
            self.aact[j] = 1
            self.t_tilde[j] = self.t
        self._set_sat(j)
        last = l == a.n_phases - 1
        self.next_time[j] = math.inf if last else self.t + a.durations[l]

    def _process_schedule(self) -> set:
        """Fire every controller switch due at the current time; returns touched agents."""
        touched = set()
        eps = 1e-12 * max(1.0, self.T)
        guard = 0
        while True:
            due = [j for j in range(self.N) if self.next_time[j] <= self.t + eps]
            if not due:
                return touched
            guard += 1
            if guard > 10 * (1 + sum(getattr(a, "n_phases", 0) for a in self.params.agents)):
                raise ZenoError("controller schedule does not advance")
            for j in due:
                touched.add(j)
                if self.params.variant == ctl.OPTIMAL:
                    if self.stage[j] == "bang":
                        self._reach_switch_point(j)
                    else:
                        self._end_period_optimal(j)
                else:
                    self._end_period_practical(j)

    def _reach_switch_point(self, j: int):
        l = self.phase[j]
        a = self.params.agents[j]
        u_before = self.adir[j]
        direction = self.adir[j]
        self.x[j] = a.switching_points[l]
        self._begin_track(j, l)
        sens = self._sens()
        if sens is not None:
            u_after = self._eval(self.t)["u"][j]
            self.tau_prev[j] = ipa.reach_switch_point(
                sens, j, self.layout.psi[j][l], direction, u_before, u_after, self.tau_prev[j])
            self._store_sens(sens)
        self._log(EventKind.REACH_SWITCH_POINT, agent=j, phase=l)

    def _end_period_optimal(self, j: int):
        l = self.phase[j]
        u_before = self._eval(self.t, left=True)["u"][j]
        self._log(EventKind.TRACK_PERIOD_END, agent=j, phase=l)
        self._begin_bang(j, l + 1)
        sens = self._sens()
        if sens is not None:
            self.tau_prev[j] = ipa.track_period_end(
                sens, j, self.layout.phi[j][l], u_before, self.adir[j], self.tau_prev[j])
            self._store_sens(sens)

    def _end_period_practical(self, j: int):
        l = self.phase[j]
        u_before = self._eval(self.t, left=True)["u"][j]
        self._log(EventKind.TRACK_PERIOD_END, agent=j, phase=l)
        self._begin_period(j, l + 1)
        sens = self._sens()
        ev = self._eval(self.t)
        if sens is not None:
            rate = ev["e"][j] if self.aact[j] else 0.0
            self.tau_prev[j] = ipa.track_period_end(
                sens, j, self.layout.phi[j][l], u_before, ev["u"][j], self.tau_prev[j], rate)
            self._store_sens(sens)
        if self.aact[j]:
            self._log(EventKind.INTEGRATOR_ACTIVATE, agent=j, phase=l + 1)

    # -- guard events ----------------------------------------------------------

    def _process_guards(self, G: np.ndarray):
        N, M = self.N, self.M
        MN = M * N
        x = self.x
        ev = self._eval(self.t, left=True)
        for k in range(MN):
            if G[k] < 0:
                i, j = divmod(k, N)
                if self.inside[i, j]:
                    self.inside[i, j] = 0
                    self._log(EventKind.SENSE_EXIT, agent=j, target=i)
                else:
                    self.inside[i, j] = 1
                    self.side[i, j] = _sgn(ev["tp"][i] - x[j]) or 1.0
                    self.agent_sensed[j] = True
                    self._log(EventKind.SENSE_ENTER, agent=j, target=i)
        for k in range(MN):
            if G[MN + k] < 0:
                i, j = divmod(k, N)
                if self.inside[i, j]:
                    self.side[i, j] = -self.side[i, j]
                    self._log(EventKind.TARGET_PASS, agent=j, target=i)
        zr = [i for i in range(M) if G[2 * MN + i] < 0]
        if zr:
            sens = self._sens()
            hits = []
            for i in zr:
                if self.inz[i]:
                    self.inz[i] = 0
                    self._log(EventKind.Z_EXIT, target=i)
                else:
                    x[N + i] = 0.0
                    hits.append(i)
                    if sens is not None:
                        ipa.r_hits_zero(sens, i)
                    self._log(EventKind.R_HITS_ZERO, target=i)
            self._store_sens(sens)
            P = self._eval(self.t)["P"]
            for i in hits:
                if self.A[i] < self.B[i] * P[i]:
                    self.inz[i] = 1
        touched = self._process_schedule()
        o = 2 * MN + M
        for j in range(N):
            if j in touched:
                continue
            if G[o + j] < 0:
                self._set_sat(j)
                self._log(EventKind.SATURATION_CROSS, agent=j, phase=self.phase[j])
        for j in range(N):
            if j in touched or G[o + N + j] >= 0 or self.aact[j]:
                continue
            self._activate(j)

    def _activate(self, j: int):
        self.aact[j] = 1
        self.t_tilde[j] = self.t
        self.x[self.N + self.M + j] = 0.0
        sens = self._sens()
        if sens is not None:
            ev = self._eval(self.t)
            est = ev["tp"] + self._noise_pos(ev["tref"])
            partials = -sens.s_prime[j].copy()
            for i in range(self.M):
                k = self.aidx[j, i]
                if k >= 0:
                    partials[k] += est[i]
            e_rate = float(self.alpha[j] @ ev["tv"]) - ev["u"][j]
            if self.at_breakpoint:
                # triggered by a measurement jump at a fixed time: no parameter dependence
                partials[:] = 0.0
            ipa.integrator_activation(sens, j, ev["e"][j], e_rate, partials)
            self._store_sens(sens)
        self._log(EventKind.INTEGRATOR_ACTIVATE, agent=j, phase=self.phase[j])

    # -- main loop -------------------------------------------------------------

    def _grow(self):
        if self.options.record:
            extra = max(1024, self.rows.shape[0])
            self.rows = np.vstack([self.rows, np.zeros((extra, self.rows.shape[1]))])
        if self.kev.shape[0] < 4 * (len(self.bp_t) + 16):
            self.kev = np.zeros((self.kev.shape[0] * 2, 3))

    def _flush_kernel_events(self, nkev: int):
        N = self.N
        for k in range(nkev):
            t, code, idx = self.kev[k]
            code, idx = int(code), int(idx)
            if code == K.KEV_GRAZE:
                i, j = divmod(idx, N)
                self._log(EventKind.SENSE_ENTER, agent=j, target=i, t=t)
                self._log(EventKind.SENSE_EXIT, agent=j, target=i, t=t)
            else:
                kind = _KEV_KIND[code]
                self._log(kind, target=idx if kind == EventKind.TARGET_BREAKPOINT else None, t=t)

    def _kernel_call(self, t_stop: float, record: bool):
        while True:
            status, t, nrec, nkev, bp_ptr = K.advance(
                self.t, t_stop, self.h, self.tol, self.x, self.D, self.mdl, self.modes,
                self.bp_t, self.bp_kind, self.bp_idx, self.bp_ptr,
                record, self.rows, self.nrec, self.kev, 0, self.acc, self.G)
            self.t, self.nrec, self.bp_ptr = t, nrec, bp_ptr
            self._flush_kernel_events(nkev)
            if status != K.FULL:
                return status
            self._grow()

    def run(self) -> SimOutput:
        T = self.T
        if self.options.record and self.rows.shape[0] == 0:
            est = int(T / self.h) + 64
            self.rows = np.zeros((est + est // 4, self.rows.shape[1]))
        if self.kev.shape[0] < len(self.bp_t) + 64:
            self.kev = np.zeros((len(self.bp_t) + 64, 3))
        eps = 1e-12 * max(1.0, T)
        while self.t < T - eps:
            t_stop = min(min(self.next_time), T)
            status = self._kernel_call(t_stop, self.options.record)
            if status == K.EVENT:
                self.at_breakpoint = self.bp_ptr > 0 and self.t == self.bp_t[self.bp_ptr - 1]
                self._process_guards(self.G.copy())
                self.at_breakpoint = False
            else:
                self._process_schedule()
            if self.D:
                self.checkpoints.append(self.acc[1:1 + self.D].copy())
                self.checkpoint_events.append(len(self.events) - 1)
        self.t = T
        self._log(EventKind.HORIZON_END)
        return self._output()

    def _output(self) -> SimOutput:
        N, M = self.N, self.M
        rows = self.rows[:self.nrec]
        c = 1
        cols = {}
        for name, width in (("s", N), ("R", M), ("u", N), ("tp", M), ("dR", M), ("I", N)):
            cols[name] = rows[:, c:c + width].copy()
            c += width
        J = float(self.acc[0] / self.T)
        grad = self.acc[1:1 + self.D] / self.T if self.D else None
        ckpt = np.array(self.checkpoints) / self.T if self.D else None
        return SimOutput(
            time=rows[:, 0].copy(), positions=cols["s"], uncertainty=cols["R"], control=cols["u"],
            target_positions=cols["tp"], uncertainty_rate=cols["dR"], integrator=cols["I"],
            events=self.events, cost=J, horizon=self.T, options=self.options, noise=self.noise,
            gradient=grad, gradient_checkpoints=ckpt, checkpoint_events=self.checkpoint_events,
            agent_sensed=list(self.agent_sensed), final_sensitivity=self._sens(),
            min_uncertainty=float(self.acc[-1]))

    # -- inspection ------------------------------------------------------------

    @property
    def state(self) -> HybridState:
        N, M = self.N, self.M
        modes = []
        for j in range(N):
            modes.append(dict(stage=self.stage[j], phase=self.phase[j], saturated=int(self.asat[j]),
                              integrator_active=bool(self.aact[j])))
        return HybridState(self.t, self.x[:N].copy(), self.x[N:N + M].copy(),
                           self.x[N + M:2 * N + M].copy(), modes, self.inz.astype(bool))

    def detect_events(self, window: float) -> Event | None:
        """Earliest event in ``(t, t + window]`` from the current state, without committing."""
        saved = (self.t, self.x.copy(), self.acc.copy(), self.bp_ptr, len(self.events), self.nrec,
                 [m.copy() for m in self.modes], list(self.next_time), list(self.phase),
                 list(self.stage), [tp.copy() for tp in self.tau_prev])
        t0 = self.t
        try:
            t_limit = min(t0 + window, self.T)
            t_stop = min(min(self.next_time), t_limit)
            status = self._kernel_call(t_stop, False)
            if status == K.EVENT:
                self._process_guards(self.G.copy())
            elif self.t < t_limit and t_stop < t_limit:
                self._process_schedule()
            new = [e for e in self.events[saved[4]:] if e.kind not in EXOGENOUS]
            return new[0] if new else None
        finally:
            (self.t, x, acc, self.bp_ptr, ne, self.nrec, mode_arrays, self.next_time, self.phase,
             self.stage, self.tau_prev) = saved
            self.x[:] = x
            self.acc[:] = acc
            del self.events[ne:]
            for dst, src in zip(self.modes, mode_arrays):
                dst[...] = src


def simulate(scenario: Scenario, params, options: SimOptions | None = None,
             noise: MeasurementNoise | None = None, sensitivities: bool = False,
             check: bool = True) -> SimOutput:
    """Integrate the closed loop over ``[0, T]`` and return trajectory, events and cost.

    ``check=False`` skips parameter validation so finite-difference probes may
    step off the simplex.
    """
    return Simulation(scenario, params, options, noise, sensitivities, check).run()


def detect_events(simulation: Simulation, window: float) -> Event | None:
    return simulation.detect_events(window)


def cost_of(scenario: Scenario, params, options: SimOptions | None = None,
            noise: MeasurementNoise | None = None, check: bool = True) -> float:
    opts = replace(options or SimOptions(), record=False)
    return simulate(scenario, params, opts, noise, check=check).cost


def recorded_cost(sim: SimOutput) -> float:
    return trajectory_cost(sim.trajectory())
