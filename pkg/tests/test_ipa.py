import math

import numpy as np
import pytest

from permon import AgentSpec, Scenario, Sinusoid, Static, TargetSpec, controllers as ctl, ipa, oracle
from permon import _kernel as K
from permon.simulator import Event, EventKind, simulate


def single(target=Static(2.0), T=5.0, s0=0.0):
    return Scenario([AgentSpec(s0, 1.0)], [TargetSpec(1.0, 3.0, 1.0, target)], T)


def segment(sc, params, mode, **kw):
    base = dict(scenario=sc, params=params, start=0.0, end=1.0, positions=np.array([0.0]),
                uncertainty=np.array([1.0]), agent_modes=(mode,), phases=(0,), controls=(1.0,),
                integrator_active=(False,))
    base.update(kw)
    return ipa.Segment(**base)


def test_bang_leaves_position_sensitivity_unchanged():
    sc = single()
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([2.0], [[1.0]], [5.0])])
    sens = ipa.SensitivityState.zeros(1, 1, 3)
    sens.s_prime[0] = [0.3, -0.2, 0.7]
    out = ipa.propagate_interval(sens, segment(sc, p, K.BANG, positions=np.array([-5.0])))
    assert np.array_equal(out.s_prime, sens.s_prime)


def test_tracking_a_static_target_keeps_sensitivities_constant():
    sc = single()
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([2.0], [[1.0]], [5.0])])
    sens = ipa.SensitivityState.zeros(1, 1, 3)
    sens.s_prime[0] = [1.0, 0.0, 0.0]
    out = ipa.propagate_interval(sens, segment(sc, p, K.TRACK, positions=np.array([2.0])))
    assert np.array_equal(out.s_prime, sens.s_prime)


def test_tracking_a_moving_target_accumulates_its_displacement():
    traj = Sinusoid(2.0, 0.5, 0.3)
    sc = single(traj)
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([2.0], [[1.0]], [5.0])])
    out = ipa.propagate_interval(ipa.SensitivityState.zeros(1, 1, 3),
                                 segment(sc, p, K.TRACK, positions=np.array([2.0]), start=0.5, end=2.0))
    assert out.s_prime[0, 1] == pytest.approx(traj.position_at(2.0) - traj.position_at(0.5), abs=1e-10)
    assert out.s_prime[0, 0] == 0.0 and out.s_prime[0, 2] == 0.0


def test_proportional_mode_matches_linear_ode_solution():
    c, kp, s0p = 2.0, 5.0, 0.4
    sc = single(Static(c))
    p = ctl.ControllerParams("practical", [ctl.PracticalAgentParams([[1.0]], [5.0], gain_p=kp)])
    sens = ipa.SensitivityState.zeros(1, 1, 2)
    sens.s_prime[0, 0] = s0p
    out = ipa.propagate_interval(sens, segment(sc, p, K.PI_TRACK, positions=np.array([1.95]),
                                               uncertainty=np.array([0.0]), zero_set=(True,)))
    # d/dt s' = -kp s' + kp c for the weight column
    exact = c + (s0p - c) * math.exp(-kp * 1.0)
    assert out.s_prime[0, 0] == pytest.approx(exact, abs=1e-8)


def test_unknown_mode_is_rejected():
    sc = single()
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([2.0], [[1.0]], [5.0])])
    with pytest.raises(ipa.UnknownModeError):
        ipa.propagate_interval(ipa.SensitivityState.zeros(1, 1, 3), segment(sc, p, 99))


def test_r_hits_zero_clears_the_row():
    sens = ipa.SensitivityState.zeros(1, 2, 2)
    sens.R_prime[0] = [0.3, -0.1]
    sens.R_prime[1] = [0.5, 0.5]
    ipa.apply_event_reset(sens, Event(1.0, EventKind.R_HITS_ZERO, None, 0), {})
    assert np.array_equal(sens.R_prime[0], [0.0, 0.0])
    assert np.array_equal(sens.R_prime[1], [0.5, 0.5])


def test_reaching_the_switch_point_from_rest():
    sens = ipa.SensitivityState.zeros(1, 1, 3)
    ctx = dict(psi_index=0, direction=1.0, u_before=1.0, u_after=0.0, tau_prev=np.zeros(3))
    tau = ipa.apply_event_reset(sens, Event(2.0, EventKind.REACH_SWITCH_POINT, 0, None, 0), ctx)
    assert tau[0] == 1.0
    assert sens.s_prime[0, 0] == 1.0


def test_switch_point_sensitivity_matches_simulated_positions():
    sc = single(T=5.0)
    h = 1e-6

    def final_s(psi):
        p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([psi], [[1.0]], [5.0])])
        return simulate(sc, p).positions[-1, 0]

    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([1.5], [[1.0]], [5.0])])
    sp = simulate(sc, p, sensitivities=True).final_sensitivity.s_prime[0, 0]
    assert sp == pytest.approx((final_s(1.5 + h) - final_s(1.5 - h)) / (2 * h), abs=1e-6)
    assert sp == 1.0


def test_induced_period_ends_inherit_earlier_durations():
    tau = ipa.track_period_end(ipa.SensitivityState.zeros(1, 1, 6), 0, 5, 0.0, 0.0,
                               np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
    assert tau.tolist() == [0.0, 0.0, 1.0, 0.0, 0.0, 1.0]


def test_shifting_a_duration_shifts_later_period_ends():
    sc = Scenario([AgentSpec(0.0, 1.0)],
                  [TargetSpec(1.0, 3.0, 1.0, Static(0.0)), TargetSpec(1.0, 3.0, 1.0, Static(3.0))], 12.0)

    def ends(phi0):
        p = ctl.ControllerParams("practical", [ctl.PracticalAgentParams(
            [[1, 0], [0, 1], [1, 0]], [phi0, 3.0, 3.0])])
        return [e.time for e in simulate(sc, p).events if e.kind is EventKind.TRACK_PERIOD_END]

    a, b = ends(3.0), ends(3.0 + 1e-3)
    assert len(a) == len(b) == 2
    assert np.allclose(np.subtract(b, a), 1e-3, atol=1e-12)


def test_idle_agent_raises_the_excitation_flag():
    sc = Scenario([AgentSpec(0.0, 1.0), AgentSpec(100.0, 1.0)],
                  [TargetSpec(1.0, 3.0, 1.0, Static(0.0))], 5.0)
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([0.5], [[1.0]], [5.0]),
                                         ctl.OptimalAgentParams([100.0], [[1.0]], [5.0])])
    rep = ipa.gradient(sc, p)
    lay = ctl.ParamLayout(p, 1)
    assert rep.excitation == [False, True]
    assert np.all(rep.block(lay, 1) == 0.0)
    assert np.any(rep.block(lay, 0) != 0.0)


def test_agents_do_not_share_position_sensitivities():
    rng = np.random.default_rng(3)
    sc = oracle.random_scenario(rng, 2, 3, 12.0)
    for variant in ctl.VARIANTS:
        p = oracle.random_params(rng, sc, variant, 2)
        sim = simulate(sc, p, sensitivities=True)
        lay = ctl.ParamLayout(p, 3)
        sp = sim.final_sensitivity.s_prime
        assert np.all(sp[0, lay.agent_slices[1]] == 0.0)
        assert np.all(sp[1, lay.agent_slices[0]] == 0.0)


def test_contributions_sum_to_the_gradient():
    rng = np.random.default_rng(8)
    sc = oracle.random_scenario(rng, 1, 2, 10.0)
    p = oracle.random_params(rng, sc, "practical", 2)
    rep = ipa.gradient(sc, p)
    assert np.allclose(rep.contributions.sum(axis=0), rep.gradient, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("variant", ctl.VARIANTS)
def test_single_target_gradient_matches_finite_differences(variant):
    sc = single(Static(2.0), T=6.0)
    if variant == "optimal":
        p = ctl.ControllerParams(variant, [ctl.OptimalAgentParams([1.7], [[1.0]], [6.0])])
    else:
        p = ctl.ControllerParams(variant, [ctl.PracticalAgentParams([[1.0]], [6.0])])
    g = ipa.gradient(sc, p).gradient
    fd = oracle.finite_diff_gradient(sc, p)
    ok, _ = oracle.gradient_agreement(g, fd)
    assert ok and fd.comparable.any()


@pytest.mark.parametrize("seed", range(6))
def test_random_instances_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    N, M, T = int(rng.integers(1, 3)), int(rng.integers(1, 5)), float(rng.uniform(5, 20))
    variant = ctl.OPTIMAL if seed % 2 == 0 else ctl.PRACTICAL
    sc = oracle.random_scenario(rng, N, M, T)
    p = oracle.random_params(rng, sc, variant, int(rng.integers(1, 4)))
    g = simulate(sc, p, sensitivities=True).gradient
    ok, good = oracle.gradient_agreement(g, oracle.finite_diff_gradient(sc, p))
    assert ok, [n for n, k in zip(ctl.ParamLayout(p, M).names(), good) if not k]
