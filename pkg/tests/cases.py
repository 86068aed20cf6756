"""Seeded instance generators shared by the unit and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from permon import AgentSpec, Scenario, Sinusoid, Static, TargetSpec, controllers as ctl, oracle
from permon import canonical as cn


def gradient_case(seed: int):
    """Randomized instance for IPA checks: N in {1,2}, M in 1..4, T in [5,20], L in 1..3."""
    rng = np.random.default_rng(seed)
    N, M, T = int(rng.integers(1, 3)), int(rng.integers(1, 5)), float(rng.uniform(5, 20))
    variant = ctl.OPTIMAL if seed % 2 == 0 else ctl.PRACTICAL
    sc = oracle.random_scenario(rng, N, M, T)
    return sc, oracle.random_params(rng, sc, variant, int(rng.integers(1, 4)))


@dataclass
class CanonicalCase:
    scenario: Scenario
    control: cn.SampledControl
    target: int
    t1: float
    t2: float


def canonical_case(seed: int) -> CanonicalCase | None:
    """One agent, well separated targets, a random held control and a single-target
    interval trimmed from inside one of its sensing phases."""
    rng = np.random.default_rng(seed)
    T = float(rng.uniform(8, 15))
    M = int(rng.integers(1, 4))
    r = float(rng.uniform(0.8, 1.5))
    tgts = []
    for i in range(M):
        c = 6.0 * i + float(rng.uniform(-0.5, 0.5))
        if rng.random() < 0.5:
            tr = Static(c)
        else:
            tr = Sinusoid(c, float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.1, 0.6)), float(rng.uniform(0, 6)))
        A = float(rng.uniform(0.3, 1))
        tgts.append(TargetSpec(A, A * float(rng.uniform(2, 5)), float(rng.uniform(0, 2)), tr))
    sc = Scenario([AgentSpec(float(rng.uniform(-1, 6.0 * (M - 1) + 1)), r)], tgts, T)
    for _ in range(20):
        u = cn.SampledControl.random(rng, 1, T, block=float(rng.uniform(0.3, 2.0)))
        dec = cn.decompose_sensing_sequence(u, sc, 0)
        cands = [p for p in dec.phases if p.end - p.start > 0.1]
        if cands:
            break
    else:
        return None
    ph = cands[int(rng.integers(len(cands)))]
    a = ph.start + (ph.end - ph.start) * float(rng.uniform(0, 0.3))
    b = ph.end - (ph.end - ph.start) * float(rng.uniform(0, 0.3))
    return CanonicalCase(sc, u, ph.target, a, b)


def check_canonical(case: CanonicalCase) -> tuple[bool, str]:
    """Canonicalize the case's interval and check improvement, continuity and domination."""
    sc, u = case.scenario, case.control
    up, plan = cn.canonicalize_interval(u, 0, case.target, case.t1, case.t2, sc)
    J, Jp, improved = cn.verify_improvement(u, up, sc, tol=1e-9)
    s0 = sc.agents[0].initial_position
    s, sp = u.positions(0, s0), up.positions(0, s0)
    times = u.node_times()
    outside = (times <= plan.t1 + 1e-12) | (times >= plan.t2 - 1e-12)
    continuous = bool(np.all(np.abs(s[outside] - sp[outside]) <= u.grid_step))
    dominated = cn.distance_domination(u, up, sc, 0, case.target, plan.t1, plan.t2)
    ok = improved and continuous and dominated
    return ok, f"J={J!r} J'={Jp!r} improved={improved} continuous={continuous} dominated={dominated}"
