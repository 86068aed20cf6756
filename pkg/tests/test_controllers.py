import numpy as np
import pytest

from permon import AgentSpec, Scenario, Sinusoid, Static, TargetSpec
from permon import controllers as ctl


def two_targets(T=10.0):
    return Scenario([AgentSpec(0.0, 1.0)],
                    [TargetSpec(1.0, 3.0, 1.0, Static(0.0)),
                     TargetSpec(1.0, 3.0, 1.0, Sinusoid(5.0, 1.0, 0.5))], T)


def test_layout_orders_parameters_per_phase():
    p = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([1.0, 2.0], [[1, 0], [0, 1]], [3.0, 4.0])])
    lay = ctl.ParamLayout(p, 2)
    assert lay.names() == ["psi[0][0]", "alpha[0][0][0]", "alpha[0][0][1]", "phi[0][0]",
                           "psi[0][1]", "alpha[0][1][0]", "alpha[0][1][1]", "phi[0][1]"]
    q = ctl.ControllerParams("practical", [ctl.PracticalAgentParams([[1, 0]], [3.0])])
    assert ctl.ParamLayout(q, 2).names() == ["alpha[0][0][0]", "alpha[0][0][1]", "phi[0][0]"]


def test_vector_round_trip(rng):
    sc = two_targets()
    for variant in ctl.VARIANTS:
        p = ctl.params_from_sequences(sc, variant, [[0, 1, 0]])
        theta = ctl.to_vector(p, 2)
        assert ctl.from_vector(p, theta, 2) == p
        theta2 = theta + rng.normal(size=theta.size)
        assert np.array_equal(ctl.to_vector(ctl.from_vector(p, theta2, 2), 2), theta2)


def test_validate_params_reports_each_violation():
    sc = two_targets()
    bad = ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([0.0], [[0.7, 0.7]], [11.0])])
    errs = ctl.validate_params(bad, sc)
    assert any("simplex" in e for e in errs)
    assert any("duration" in e for e in errs)
    wrong_size = ctl.ControllerParams("practical", [ctl.PracticalAgentParams([[1.0]], [1.0])])
    assert any("weights for 2 targets" in e for e in ctl.validate_params(wrong_size, sc))
    assert ctl.validate_params(ctl.params_from_sequences(sc, "practical", [[0, 1]]), sc) == []


def test_variant_type_checked():
    with pytest.raises(TypeError):
        ctl.ControllerParams("optimal", [ctl.PracticalAgentParams([[1.0]], [1.0])])
    with pytest.raises(ValueError):
        ctl.ControllerParams("greedy", [])


def test_optimal_schedule_bangs_then_tracks():
    sc = two_targets()
    p = ctl.OptimalAgentParams([2.0, -1.0], [[1, 0], [0, 1]], [1.0, 1.0])
    modes = list(ctl.optimal_mode_schedule(0.0, p, [t.trajectory for t in sc.targets], 10.0))
    assert [m.kind for m in modes] == ["bang", "track", "bang", "track"]
    assert modes[0].end == 2.0 and modes[0].direction == 1.0
    assert modes[1].end == 3.0
    # tracking a static target holds position, then bang back to -1
    assert modes[2].direction == -1.0 and modes[2].end == pytest.approx(6.0)
    # the last phase runs to the horizon
    assert modes[3].end == 10.0


def test_optimal_control_saturates():
    fast = Sinusoid(0.0, 3.0, 1.0)
    m = ctl.Mode("track", 0, 0.0, 1.0, 0.0, (1.0,))
    assert ctl.optimal_control(m, 0.0, [fast]) == 1.0
    assert ctl.optimal_control(ctl.Mode("bang", 0, 0, 1, -1.0, None), 0.3, [fast]) == -1.0


def test_practical_control_modes():
    p = ctl.PracticalAgentParams([[1.0]], [5.0], gain_p=5.0, gain_i=1.0)
    tr = [Static(1.0)]
    assert ctl.practical_control(0.0, 0.0, 0.0, ctl.PracticalContext(0, False), p, tr) == (1.0, "bang+")
    assert ctl.practical_control(0.0, 2.0, 0.0, ctl.PracticalContext(0, False), p, tr) == (-1.0, "bang-")
    u, mode = ctl.practical_control(0.0, 0.95, 0.1, ctl.PracticalContext(0, True), p, tr)
    assert mode == "PI" and u == pytest.approx(5 * 0.05 + 0.1)
    u, mode = ctl.practical_control(0.0, 0.95, 0.0, ctl.PracticalContext(0, False), p, tr,
                                    target_positions=[1.05])
    assert mode == "P" and u == pytest.approx(0.5)


def test_practical_periods_truncate_at_horizon():
    p = ctl.PracticalAgentParams([[1.0]] * 3, [4.0, 8.0, 1.0])
    assert ctl.practical_period_bounds(p, 10.0) == [(0.0, 4.0), (4.0, 10.0)]
    q = ctl.PracticalAgentParams([[1.0]] * 2, [1.0, 1.0])
    assert ctl.practical_period_bounds(q, 10.0) == [(0.0, 1.0), (1.0, 10.0)]


def test_params_from_sequences_stops_short_of_target():
    sc = two_targets()
    p = ctl.params_from_sequences(sc, "optimal", [[1]])
    psi = p.agents[0].switching_points[0]
    # a unit-speed agent from 0 meets the target at t = psi + 0.1 r
    traj = sc.targets[1].trajectory
    assert traj.position_at(psi + 0.1) - psi == pytest.approx(0.1, abs=1e-6)
    assert p.agents[0].combinations[0].weights == (0.0, 1.0)


def test_random_sequences_avoid_immediate_repeats():
    seqs = ctl.random_sequences(np.random.default_rng(0), 3, 4, 10)
    assert len(seqs) == 3 and all(len(s) == 10 for s in seqs)
    assert all(a != b for s in seqs for a, b in zip(s, s[1:]))
    assert ctl.random_sequences(np.random.default_rng(0), 1, 1, 3) == [[0, 0, 0]]
