"""Projected feasible-direction descent with Armijo backtracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import controllers as ctl
from .simulator import MeasurementNoise, SimOptions, simulate


@dataclass(frozen=True)
class DescentConfig:
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 1.0
    max_iterations: int = 100
    stall_tolerance: float = 1e-7
    seed: int = 0
    sim_options: SimOptions | None = None

    def __post_init__(self):
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if self.max_backtracks < 0 or self.max_iterations < 0:
            raise ValueError("iteration limits must be nonnegative")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")


@dataclass
class IterateRecord:
    iteration: int
    params: ctl.ControllerParams
    cost: float
    grad_norm: float
    step: float
    backtracks: int
    excitation: list = field(default_factory=list)
    status: str = "accepted"
    min_uncertainty: float = math.nan


class InfeasibleAlpha(ValueError):
    pass


def feasible_direction_alpha(alpha, grad_alpha, tol: float = ctl.SIMPLEX_TOL) -> np.ndarray:
    """Projection of ``-grad_alpha`` onto ``{p : 0 <= alpha + p <= 1, sum(p) = 0}``.

    KKT gives ``p = clip(-g - lam, -alpha, 1 - alpha)`` with ``lam`` chosen so the
    entries sum to zero.  The sum is piecewise linear and nonincreasing in
    ``lam``, so the root is found exactly between sorted breakpoints.
    """
    a = np.asarray(getattr(alpha, "weights", alpha), dtype=float)
    g = np.asarray(grad_alpha, dtype=float)
    if a.shape != g.shape:
        raise ValueError("alpha and gradient sizes differ")
    if np.any(a < -tol) or np.any(a > 1 + tol) or abs(a.sum() - 1.0) > tol:
        raise InfeasibleAlpha(f"alpha {a.tolist()} is not on the simplex")
    a = np.clip(a, 0.0, 1.0)
    lo, hi = -a, 1.0 - a
    w = -g

    def total(lam):
        return np.clip(w - lam, lo, hi).sum()

    knots = np.unique(np.concatenate([w - lo, w - hi]))
    vals = np.array([total(k) for k in knots])
    # total is M-1 >= 0 at the smallest knot and -1 at the largest
    k = int(np.searchsorted(-vals, 0.0))
    if k == 0:
        lam = knots[0]
    elif k >= knots.size:
        lam = knots[-1]
    elif vals[k] == 0.0:
        lam = knots[k]
    else:
        l0, l1, v0, v1 = knots[k - 1], knots[k], vals[k - 1], vals[k]
        lam = l0 + (l1 - l0) * v0 / (v0 - v1)
    p = np.clip(w - lam, lo, hi)
    # remove the last rounding residue on a free coordinate
    free = np.nonzero((p > lo + 1e-15) & (p < hi - 1e-15))[0]
    if free.size:
        p[free[0]] -= p.sum()
    return p


def project_simplex(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def feasible_direction_full(params: ctl.ControllerParams, grad: np.ndarray, n_targets: int) -> np.ndarray:
    """Search direction: simplex-feasible blocks for every ``alpha``, ``-grad`` elsewhere."""
    lay = ctl.ParamLayout(params, n_targets)
    grad = np.asarray(grad, dtype=float)
    d = -grad.copy()
    for j, a in enumerate(params.agents):
        for l in range(a.n_phases):
            idx = lay.alpha[j][l]
            d[idx] = feasible_direction_alpha(a.combinations[l], grad[idx])
    return d


def project(theta: np.ndarray, layout: ctl.ParamLayout, horizon: float) -> np.ndarray:
    """Clamp durations to ``[0, T]`` and put every ``alpha`` block back on the simplex."""
    out = np.array(theta, dtype=float)
    for j in range(len(layout.alpha)):
        for l in range(len(layout.phi[j])):
            out[layout.phi[j][l]] = min(max(out[layout.phi[j][l]], 0.0), horizon)
            idx = layout.alpha[j][l]
            blk = out[idx]
            if np.any(blk < 0) or np.any(blk > 1) or abs(blk.sum() - 1.0) > 1e-12:
                out[idx] = project_simplex(blk)
    return out


def _evaluate(scenario, params, config, noise):
    sim = simulate(scenario, params, _opts(config), noise=noise, sensitivities=True)
    from .ipa import gradient
    rep = gradient(scenario, params, sim)
    return sim.cost, rep.gradient, rep.excitation, sim.min_uncertainty


def _opts(config: DescentConfig) -> SimOptions:
    base = config.sim_options or SimOptions()
    return SimOptions(base.step, base.event_tolerance, base.max_events, record=False)


def optimize(scenario, params: ctl.ControllerParams, config: DescentConfig | None = None,
             noise: MeasurementNoise | None = None,
             callback: Callable[[IterateRecord], None] | None = None,
             freeze_alpha: bool = False):
    """Descend from ``params``; returns ``(final params, records)``.

    Record 0 is the starting point.  Iteration stops on a zero feasible
    direction, a failed line search, ``|dJ| < stall_tolerance`` or the
    iteration limit.  ``freeze_alpha`` keeps every tracking combination fixed.
    """
    config = config or DescentConfig()
    errs = ctl.validate_params(params, scenario)
    if errs:
        raise ValueError("; ".join(errs))
    M, T = scenario.n_targets, scenario.horizon
    layout = ctl.ParamLayout(params, M)
    theta = ctl.to_vector(params, M)
    J, g, exc, rmin = _evaluate(scenario, params, config, noise)
    records = [IterateRecord(0, params, J, float(np.linalg.norm(g)), 0.0, 0, exc, "start", rmin)]
    if callback:
        callback(records[-1])

    for it in range(1, config.max_iterations + 1):
        d = feasible_direction_full(params, g, M)
        if freeze_alpha:
            for j in range(len(layout.alpha)):
                d[layout.alpha[j].ravel()] = 0.0
        if np.linalg.norm(project(theta + d, layout, T) - theta) <= 1e-12:
            records[-1].status = "stationary"
            break
        eta = config.initial_step
        accepted = None
        for b in range(config.max_backtracks + 1):
            trial = project(theta + eta * d, layout, T)
            delta = trial - theta
            slope = float(g @ delta)
            if slope < 0.0:
                p_trial = ctl.from_vector(params, trial, M)
                Jt = simulate(scenario, p_trial, _opts(config), noise=noise).cost
                if Jt <= J + config.armijo_c1 * slope:
                    # sensitivities only for the accepted point
                    Jt, gt, exct, rmin = _evaluate(scenario, p_trial, config, noise)
                    accepted = (b, trial, p_trial, Jt, gt, exct, rmin)
                    break
            eta *= config.backtrack_factor
        if accepted is None:
            records.append(IterateRecord(it, params, J, float(np.linalg.norm(g)), 0.0,
                                         config.max_backtracks, exc, "stall", records[-1].min_uncertainty))
            if callback:
                callback(records[-1])
            break
        b, theta, params, Jt, g, exc, rmin = accepted
        dJ = J - Jt
        J = Jt
        records.append(IterateRecord(it, params, J, float(np.linalg.norm(g)), eta, b, exc, "accepted", rmin))
        if callback:
            callback(records[-1])
        if abs(dJ) < config.stall_tolerance:
            records[-1].status = "converged"
            break
    return params, records


def restarts(scenario, sampler: Callable[[np.random.Generator], ctl.ControllerParams],
             count: int, config: DescentConfig | None = None, noise: MeasurementNoise | None = None):
    """Run ``optimize`` from ``count`` seeded initial points; returns results sorted by final cost."""
    config = config or DescentConfig()
    seeds = np.random.SeedSequence(config.seed).spawn(count)
    out = []
    for k, ss in enumerate(seeds):
        p0 = sampler(np.random.default_rng(ss))
        final, recs = optimize(scenario, p0, config, noise)
        out.append((recs[-1].cost, k, final, recs))
    out.sort(key=lambda r: (r[0], r[1]))
    return out


def armijo_holds(J0: float, J1: float, grad: np.ndarray, delta: np.ndarray, c1: float) -> bool:
    return J1 <= J0 + c1 * float(np.dot(grad, delta)) and math.isfinite(J1)
