import numpy as np
import pytest

from permon import AgentSpec, Scenario, ScenarioError, Sinusoid, Static, TargetSpec
from permon import model


def test_monitoring_is_a_tent_of_radius_r():
    assert model.monitoring(0.0, 0.0, 2.0) == 1.0
    assert model.monitoring(1.0, 0.0, 2.0) == 0.5
    assert model.monitoring(-1.0, 0.0, 2.0) == 0.5
    assert model.monitoring(2.0, 0.0, 2.0) == 0.0
    assert model.monitoring(5.0, 0.0, 2.0) == 0.0


def test_joint_monitoring_combines_independent_detections():
    assert model.joint_monitoring([0.5, 0.5]) == pytest.approx(0.75)
    assert model.joint_monitoring([0.0, 0.0]) == 0.0
    assert model.joint_monitoring([1.0, 0.3]) == 1.0


def test_uncertainty_rate_pins_at_zero():
    assert model.uncertainty_rate(1.0, 1.0, 3.0, 1.0) == -2.0
    assert model.uncertainty_rate(0.0, 1.0, 3.0, 1.0) == 0.0
    # growth resumes from zero when coverage is too weak
    assert model.uncertainty_rate(0.0, 1.0, 3.0, 0.2) == pytest.approx(0.4)


@pytest.mark.parametrize("kwargs", [
    dict(growth_rate=0.0, reduction_rate=1.0, initial_uncertainty=0.0),
    dict(growth_rate=2.0, reduction_rate=1.0, initial_uncertainty=0.0),
    dict(growth_rate=1.0, reduction_rate=2.0, initial_uncertainty=-1.0),
])
def test_target_spec_rejects_invalid_rates(kwargs):
    with pytest.raises(ScenarioError):
        TargetSpec(trajectory=Static(0.0), **kwargs)


def test_scenario_validation():
    t = TargetSpec(1.0, 2.0, 0.0, Static(0.0))
    with pytest.raises(ScenarioError):
        AgentSpec(0.0, 0.0)
    with pytest.raises(ScenarioError):
        Scenario([AgentSpec(0.0, 1.0)], [t], 0.0)
    with pytest.raises(ScenarioError):
        Scenario([], [t], 1.0)


def test_segment_integrals_exact_for_cubics():
    f = lambda t: t ** 3 - 2 * t ** 2 + 1  # noqa: E731
    df = lambda t: 3 * t ** 2 - 4 * t  # noqa: E731
    t = np.array([0.0, 0.7, 2.0])
    seg = model.segment_integrals(t, f(t), df(t))
    exact = lambda a, b: (b ** 4 / 4 - 2 * b ** 3 / 3 + b) - (a ** 4 / 4 - 2 * a ** 3 / 3 + a)  # noqa: E731
    assert seg[0] == pytest.approx(exact(0.0, 0.7), abs=1e-14)
    assert seg[1] == pytest.approx(exact(0.7, 2.0), abs=1e-14)


def test_cost_of_triangle_history():
    # R falls from 1 at rate 2, then sits at zero: area 0.25 over T = 2
    traj = model.Trajectory(np.array([0.0, 0.5, 0.5, 2.0]), np.array([[1.0], [0.0], [0.0], [0.0]]),
                            np.array([[-2.0], [-2.0], [0.0], [0.0]]), 2.0)
    assert model.cost(traj) == 0.125


def test_cost_rejects_partial_histories():
    traj = model.Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((2, 1)), 2.0)
    with pytest.raises(model.IncompleteTrajectory):
        model.cost(traj)


def test_assumption_report_flags_fast_and_close_targets():
    sc = Scenario([AgentSpec(0.0, 1.0)],
                  [TargetSpec(1.0, 2.0, 0.0, Sinusoid(0.0, 2.0, 1.0)),
                   TargetSpec(1.0, 2.0, 0.0, Static(1.0))], 10.0)
    rep = model.validate_assumptions(sc, 0.01)
    assert not rep.speed_ok and rep.max_speed == pytest.approx(2.0, rel=1e-4)
    assert not rep.separation_ok and rep.min_separation_pair == (0, 1)
    assert len(rep.warnings) == 2

    calm = Scenario([AgentSpec(0.0, 1.0)],
                    [TargetSpec(1.0, 2.0, 0.0, Static(0.0)), TargetSpec(1.0, 2.0, 0.0, Static(5.0))], 10.0)
    assert model.validate_assumptions(calm, 0.1).ok
