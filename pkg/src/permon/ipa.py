"""Infinitesimal perturbation analysis: sensitivity propagation, event resets, cost gradient.

Between events the sensitivities ``ds/dθ``, ``dR/dθ`` (and the PI
integrator's ``dI/dθ``) integrate alongside the state inside the compiled
kernel.  This module owns the jump conditions applied at events and the
assembly of the cost gradient.

The PI-mode sensitivity is propagated exactly by carrying ``dI/dθ`` as a
state: ``d/dt ds/dθ = K_p de/dθ + K_i dI/dθ`` with ``d/dt dI/dθ = de/dθ``.
The shortcut ``∂f/∂s = -(K_p + K_i (t - t̃))`` is only exact when ``ds/dθ``
stays constant over the PI interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K


@dataclass
class SensitivityState:
    s_prime: np.ndarray            # (N, D)
    R_prime: np.ndarray            # (M, D)
    I_prime: np.ndarray            # (N, D)
    tau_prime: list = field(default_factory=list)   # one D-vector per logged event

    @classmethod
    def zeros(cls, n_agents: int, n_targets: int, n_params: int) -> "SensitivityState":
        return cls(np.zeros((n_agents, n_params)), np.zeros((n_targets, n_params)),
                   np.zeros((n_agents, n_params)))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.s_prime.ravel(), self.R_prime.ravel(), self.I_prime.ravel()])

    @classmethod
    def unpack(cls, flat: np.ndarray, n_agents: int, n_targets: int, n_params: int) -> "SensitivityState":
        N, M, D = n_agents, n_targets, n_params
        return cls(flat[:N * D].reshape(N, D).copy(),
                   flat[N * D:(N + M) * D].reshape(M, D).copy(),
                   flat[(N + M) * D:(2 * N + M) * D].reshape(N, D).copy())


@dataclass
class GradientReport:
    gradient: np.ndarray
    contributions: np.ndarray        # (segments, D): share of each inter-event segment
    segment_end_events: list         # index into the event log closing each segment
    excitation: list[bool]           # per agent: zero block while sensing nothing
    names: list[str] = field(default_factory=list)

    def block(self, layout, agent: int) -> np.ndarray:
        return self.gradient[layout.agent_slices[agent]]


class UnknownModeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# interval propagation


@dataclass
class Segment:
    """Frozen-mode context for one inter-event interval.

    ``agent_modes`` uses the kernel codes ``BANG`` (constant control, also
    saturated tracking), ``TRACK`` (optimal velocity tracking) and ``PI_TRACK``
    (practical law; ``integrator_active`` selects P or PI).  Measurement noise
    is not modelled here.
    """

    scenario: object
    params: object
    start: float
    end: float
    positions: np.ndarray          # s(start), (N,)
    uncertainty: np.ndarray        # R(start), (M,)
    agent_modes: tuple
    phases: tuple
    controls: tuple = ()           # BANG control per agent
    integrator: np.ndarray | None = None
    integrator_active: tuple = ()
    zero_set: tuple = ()           # targets pinned at R = 0
    steps: int = 200

    def _rates(self, t, s, R, I, sp, Rp, Ip, alpha_cols):
        sc = self.scenario
        N, M = sc.n_agents, sc.n_targets
        th = sc.target_positions(t)
        thd = sc.target_velocities(t)
        ds, dI = np.zeros(N), np.zeros(N)
        dsp, dIp = np.zeros_like(sp), np.zeros_like(Ip)
        for j in range(N):
            a = self.params.agents[j]
            l = self.phases[j]
            md = self.agent_modes[j]
            w = np.asarray(a.combinations[l].weights)
            if md == K.BANG:
                ds[j] = self.controls[j]
            elif md == K.TRACK:
                ds[j] = min(1.0, max(-1.0, float(w @ thd)))
                dsp[j, alpha_cols[j]] = thd
            else:
                e = float(w @ th) - s[j]
                ep = -sp[j].copy()
                ep[alpha_cols[j]] += th
                ds[j] = a.gain_p * e
                dsp[j] = a.gain_p * ep
                if self.integrator_active[j]:
                    ds[j] += a.gain_i * I[j]
                    dsp[j] += a.gain_i * Ip[j]
                    dI[j] = e
                    dIp[j] = ep
        dR, dRp = np.zeros(M), np.zeros_like(Rp)
        r = np.array([ag.sensing_range for ag in sc.agents])
        for i in range(M):
            if self.zero_set and self.zero_set[i]:
                continue
            miss = np.ones(N)
            slope = np.zeros(N)
            for j in range(N):
                d = th[i] - s[j]
                if abs(d) < r[j]:
                    miss[j] = abs(d) / r[j]
                    slope[j] = np.sign(d) / r[j]      # dp/ds
            P = 1.0 - np.prod(miss)
            tgt = sc.targets[i]
            dR[i] = tgt.growth_rate - tgt.reduction_rate * P
            for j in range(N):
                if slope[j] != 0.0:
                    others = np.prod(np.delete(miss, j))
                    dRp[i] -= tgt.reduction_rate * others * slope[j] * sp[j]
        return ds, dR, dI, dsp, dRp, dIp

    def integrate(self, sens: SensitivityState) -> SensitivityState:
        from .controllers import ParamLayout
        lay = ParamLayout(self.params, self.scenario.n_targets)
        alpha_cols = [lay.alpha[j][self.phases[j]] for j in range(self.scenario.n_agents)]
        N = self.scenario.n_agents
        s = np.array(self.positions, dtype=float)
        R = np.array(self.uncertainty, dtype=float)
        I = np.zeros(N) if self.integrator is None else np.array(self.integrator, dtype=float)
        y = [s, R, I, sens.s_prime.copy(), sens.R_prime.copy(), sens.I_prime.copy()]
        h = (self.end - self.start) / self.steps
        t = self.start
        for _ in range(self.steps):
            k1 = self._rates(t, *y, alpha_cols)
            k2 = self._rates(t + h / 2, *[a + h / 2 * b for a, b in zip(y, k1)], alpha_cols)
            k3 = self._rates(t + h / 2, *[a + h / 2 * b for a, b in zip(y, k2)], alpha_cols)
            k4 = self._rates(t + h, *[a + h * b for a, b in zip(y, k3)], alpha_cols)
            y = [a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
            t += h
        return SensitivityState(y[3], y[4], y[5], list(sens.tau_prime))


def propagate_interval(sens: SensitivityState, segment: Segment) -> SensitivityState:
    """Integrate the sensitivity equations across one inter-event segment.

    Reference implementation of what the compiled kernel does in-line: the
    state and its sensitivities advance together with the modes frozen.
    """
    for m in segment.agent_modes:
        if m not in (K.BANG, K.TRACK, K.PI_TRACK):
            raise UnknownModeError(f"unknown agent mode {m!r}")
    return segment.integrate(sens)


# ---------------------------------------------------------------------------
# event resets


def reach_switch_point(sens: SensitivityState, agent: int, psi_index: int, direction: float,
                       u_before: float, u_after: float, tau_prev: np.ndarray) -> np.ndarray:
    """Endogenous switch ``s = psi``; returns the event-time derivative and applies
    the ``ds/dθ`` jump in place."""
    D = sens.s_prime.shape[1]
    if direction == 0.0:
        tau = tau_prev.copy()
    else:
        dg = np.zeros(D)
        dg[psi_index] = 1.0
        tau = direction * (dg - sens.s_prime[agent])
    sens.s_prime[agent] += (u_before - u_after) * tau
    return tau


def track_period_end(sens: SensitivityState, agent: int, phi_index: int,
                     u_before: float, u_after: float, tau_prev: np.ndarray,
                     integrator_rate_after: float = 0.0) -> np.ndarray:
    """Induced switch at the end of a tracking period.

    The event time is the previous agent switch time plus ``phi_l``, so its
    derivative inherits the previous one and gains a unit entry for ``phi_l``.
    The integrator restarts from zero, so ``dI/dθ = -f_I(τ+) τ'``.
    """
    tau = tau_prev.copy()
    tau[phi_index] += 1.0
    sens.s_prime[agent] += (u_before - u_after) * tau
    sens.I_prime[agent] = -integrator_rate_after * tau
    return tau


def r_hits_zero(sens: SensitivityState, target: int) -> None:
    sens.R_prime[target] = 0.0


def integrator_activation(sens: SensitivityState, agent: int, error: float, error_rate: float,
                          error_partials: np.ndarray) -> np.ndarray:
    """Endogenous activation ``|K_p e| = eps_tol``.

    ``error_partials`` is ``∂e/∂θ`` at fixed time; ``τ' = -∂e/∂θ / ė``.  The
    integrator rate jumps from 0 to ``e`` while the integrator value stays 0.
    """
    if abs(error_rate) < 1e-12:
        tau = np.zeros_like(error_partials)
    else:
        tau = -error_partials / error_rate
    sens.I_prime[agent] = -error * tau
    return tau


def apply_event_reset(sens: SensitivityState, event, context: dict) -> np.ndarray | None:
    """Apply the jump condition for ``event``; returns ``τ'`` when it is defined.

    ``context`` carries the pre/post dynamics the reset needs (keys depend on
    the event kind, see the simulator).  Events at which the right-hand side is
    continuous (sensing boundaries, target passes, saturation, zero-set exit,
    exogenous breakpoints) leave the sensitivities untouched.
    """
    from .simulator import EventKind as EK

    kind = event.kind
    if kind == EK.REACH_SWITCH_POINT:
        return reach_switch_point(sens, event.agent, context["psi_index"], context["direction"],
                                  context["u_before"], context["u_after"], context["tau_prev"])
    if kind == EK.TRACK_PERIOD_END:
        return track_period_end(sens, event.agent, context["phi_index"], context["u_before"],
                                context["u_after"], context["tau_prev"],
                                context.get("integrator_rate_after", 0.0))
    if kind == EK.R_HITS_ZERO:
        r_hits_zero(sens, event.target)
        return None
    if kind == EK.INTEGRATOR_ACTIVATE:
        return integrator_activation(sens, event.agent, context["error"], context["error_rate"],
                                     context["error_partials"])
    return None


# ---------------------------------------------------------------------------
# gradient


def gradient(scenario, params, sim=None, options=None) -> GradientReport:
    """Cost gradient ``dJ/dθ`` by IPA.

    Uses the sensitivities carried by ``sim`` when it was produced with them;
    otherwise re-simulates with sensitivities enabled.
    """
    from . import simulator
    from .controllers import ParamLayout

    if sim is None or sim.gradient is None:
        opts = options if options is not None else (sim.options if sim is not None else None)
        sim = simulator.simulate(scenario, params, opts, sensitivities=True,
                                 noise=sim.noise if sim is not None else None)
    layout = ParamLayout(params, scenario.n_targets)
    g = sim.gradient
    contrib = np.diff(np.vstack([np.zeros((1, g.size)), sim.gradient_checkpoints]), axis=0)
    excitation = []
    for j in range(scenario.n_agents):
        block = g[layout.agent_slices[j]]
        excitation.append(bool(np.all(block == 0.0) and not sim.agent_sensed[j]))
    return GradientReport(gradient=g, contributions=contrib,
                          segment_end_events=list(sim.checkpoint_events),
                          excitation=excitation, names=layout.names())
