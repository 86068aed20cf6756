import numpy as np
import pytest

from permon import AgentSpec, Scenario, Static, TargetSpec
from permon import canonical as cn
from cases import canonical_case, check_canonical


def two_static(T=10.0):
    return Scenario([AgentSpec(0.0, 1.0)],
                    [TargetSpec(1.0, 3.0, 1.0, Static(3.0)), TargetSpec(1.0, 3.0, 1.0, Static(9.0))], T)


def test_sampled_control_validation():
    with pytest.raises(ValueError):
        cn.SampledControl(np.full((1, 10), 1.5), 0.1)
    with pytest.raises(ValueError):
        cn.SampledControl(np.zeros(10), 0.1)
    u = cn.SampledControl.zeros(2, 10.0)
    assert u.n_cells == 1000 and u.grid_step == pytest.approx(0.01)


def test_positions_integrate_the_control():
    u = cn.SampledControl.for_horizon([[1.0, 1.0, -1.0, 0.0]], 4.0)
    assert u.positions(0, 2.0).tolist() == [2.0, 3.0, 4.0, 3.0, 3.0]


def test_decomposition_follows_sensing_contacts():
    sc = two_static(12.0)
    # out to 9 at full speed, then hold
    vals = np.concatenate([np.ones(900), np.zeros(300)])[None, :]
    u = cn.SampledControl.for_horizon(vals, 12.0)
    dec = cn.decompose_sensing_sequence(u, sc, 0)
    assert [p.target for p in dec.phases] == [0, 1]
    (i0, (a0, b0)), (i1, (a1, b1)) = list(dec)
    # phases tile [0, T]: the first ends when target 0 is left behind
    assert a0 == 0.0 and b0 == pytest.approx(4.0, abs=1e-6)
    assert a1 == b0 and b1 == pytest.approx(12.0)
    assert dec.length_bound is None or dec.length_bound >= len(dec)


def test_no_contacts_gives_an_empty_decomposition():
    sc = two_static()
    u = cn.SampledControl.for_horizon(-np.ones((1, 100)), 10.0)
    assert len(cn.decompose_sensing_sequence(u, sc, 0)) == 0


def test_wandering_inside_the_range_is_straightened():
    sc = two_static(10.0)
    rng = np.random.default_rng(1)
    # reach the target, then jitter around it
    vals = np.concatenate([np.ones(300), rng.uniform(-1, 1, 700)])[None, :]
    u = cn.SampledControl.for_horizon(vals, 10.0)
    up, plan = cn.canonicalize_interval(u, 0, 0, 3.5, 9.0, sc)
    J, Jp, improved = cn.verify_improvement(u, up, sc)
    assert improved and Jp < J
    assert cn.distance_domination(u, up, sc, 0, 0, plan.t1, plan.t2)
    # outside the interval the control is untouched
    k = int(round(plan.t1 / u.grid_step))
    assert np.array_equal(u.values[0, :k], up.values[0, :k])


@pytest.mark.parametrize("seed", range(10))
def test_random_controls_do_not_get_worse(seed):
    case = canonical_case(seed)
    assert case is not None
    ok, detail = check_canonical(case)
    assert ok, detail
