import csv
import json
from pathlib import Path

import numpy as np
import pytest

import permon
from permon import cli, controllers as ctl, model, scenario_io as sio
from permon.simulator import SimOptions, simulate

BUNDLED = Path(permon.__file__).parent / "scenarios"

SMALL = """\
horizon: 6.0
agents:
  - {initial_position: 0.0, sensing_range: 1.0}
targets:
  - {growth_rate: 1.0, reduction_rate: 3.0, initial_uncertainty: 1.0,
     trajectory: {kind: static, position: 0.0}}
  - {growth_rate: 0.5, reduction_rate: 3.0, initial_uncertainty: 1.0,
     trajectory: {kind: sinusoid, offset: 3.0, amplitude: 0.5, angular_frequency: 0.4, phase: 0.3}}
controller:
  variant: optimal
  initial: explicit
  agents:
    - switching_points: [2.5, 0.0]
      combinations: [[0.0, 1.0], [1.0, 0.0]]
      durations: [1.0, 6.0]
simulator: {step: 0.01}
optimizer: {max_iterations: 4}
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_validate_accepts_a_good_file(small, capsys):
    assert cli.main(["validate", str(small)]) == 0
    assert "N=1 M=2" in capsys.readouterr().out


def test_validate_reports_the_field_and_line_of_a_bad_value(small, capsys):
    small.write_text(SMALL.replace("sensing_range: 1.0", "sensing_range: -1.0"))
    assert cli.main(["validate", str(small)]) == 1
    assert f"{small}:3: agents[0].sensing_range" in capsys.readouterr().err


def test_validate_warns_about_fast_targets(small, capsys):
    small.write_text(SMALL.replace("amplitude: 0.5", "amplitude: 5.0"))
    assert cli.main(["validate", str(small)]) == 0
    assert "WARNING" in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["experiment", "bogus", "x.yaml"])
    assert exc.value.code == 1


def test_unreadable_input_and_unwritable_output(small, tmp_path, capsys):
    assert cli.main(["simulate", str(tmp_path / "absent.yaml")]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["simulate", str(small), "-o", str(blocker)]) == 2


def test_simulate_writes_consistent_files(small, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["simulate", str(small), "-o", str(out)]) == 0
    header, rows = read_csv(out / "states.csv")
    assert header == ["time", "s_1", "R_1", "R_2", "u_1", "theta_1", "theta_2"]
    assert float(rows[0][0]) == 0.0 and float(rows[-1][0]) == 6.0
    eh, ev = read_csv(out / "events.csv")
    assert eh == ["time", "kind", "agent_index", "target_index", "phase_index"]
    assert ev and all(len(r) == 5 for r in ev)
    summary = json.loads((out / "summary.json").read_text())
    data = np.array([[float(x) for x in r] for r in rows])
    sf = sio.load(small)
    sim = simulate(sf.scenario, sf.params, sf.sim)
    assert summary["cost"] == model.cost(sim)
    assert np.array_equal(data[:, 2:4], sim.uncertainty)
    assert summary["events"] == len(ev)
    assert summary["config"]["horizon"] == 6.0


def test_simulate_is_byte_identical_across_runs(small, tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", str(small), "-o", str(tmp_path / name), "--seed", "3"]) == 0
    for f in ("states.csv", "events.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_step_flag_overrides_the_file(small, tmp_path):
    assert cli.main(["simulate", str(small), "-o", str(tmp_path), "--step", "0.5"]) == 0
    _, rows = read_csv(tmp_path / "states.csv")
    assert len({r[0] for r in rows}) <= 6.0 / 0.5 + 50


def test_optimize_log_and_snapshot(small, tmp_path):
    out = tmp_path / "opt"
    assert cli.main(["optimize", str(small), "-o", str(out)]) == 0
    header, rows = read_csv(out / "iterates.csv")
    assert header == ["iteration", "J", "grad_norm", "step", "backtracks"]
    J = [float(r[1]) for r in rows]
    assert all(b <= a for a, b in zip(J, J[1:])) and J[-1] < J[0]
    snap = sio.load(out / "final.yaml")
    again = simulate(snap.scenario, snap.params, snap.sim).cost
    assert abs(again - J[-1]) <= 1e-9
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_cost"] == J[-1]


def test_optimize_grad_check_adds_agreement_columns(small, tmp_path):
    out = tmp_path / "gc"
    assert cli.main(["optimize", str(small), "-o", str(out), "--max-iters", "2", "--grad-check"]) == 0
    header, rows = read_csv(out / "iterates.csv")
    assert header[-3:] == ["fd_max_abs_diff", "fd_compared", "fd_agree"]
    assert len(rows) == 3 and all(r[-1] == "1" for r in rows)


@pytest.mark.parametrize("name", ["static.yaml", "deadzone.yaml", "noise.yaml"])
def test_bundled_files_round_trip(name):
    a = sio.load(BUNDLED / name)
    b = sio.loads(sio.dumps(a))
    assert b.scenario == a.scenario and b.params == a.params
    assert b.sim == a.sim and b.experiment == a.experiment
    assert sio.dumps(b) == sio.dumps(a)


def test_optimizer_inherits_the_simulator_section():
    sf = sio.load(BUNDLED / "noise.yaml")
    assert sf.optimizer.sim_options == sf.sim and sf.sim.step == 0.05
    again = sio.loads(sio.dumps(sf))
    assert again.optimizer == sf.optimizer


def test_round_trip_of_random_practical_parameters(small):
    sf = sio.load(small)
    p = ctl.params_from_sequences(sf.scenario, "practical", [[0, 1, 0]], gain_p=4.0, gain_i=0.5)
    sf = sio.with_params(sf, p)
    back = sio.loads(sio.dumps(sf))
    assert back.params == p and back.scenario == sf.scenario


def test_deadzone_experiment_command(tmp_path):
    out = tmp_path / "dz"
    assert cli.main(["experiment", "deadzone", str(BUNDLED / "deadzone.yaml"), "-o", str(out),
                     "--max-iters", "5"]) == 0
    header, rows = read_csv(out / "deadzone.csv")
    assert rows and json.loads((out / "deadzone_summary.json").read_text())["kind"] == "deadzone"


def test_noise_experiment_command_honours_repetitions(tmp_path):
    out = tmp_path / "nz"
    assert cli.main(["experiment", "noise", str(BUNDLED / "noise.yaml"), "-o", str(out),
                     "--max-iters", "1", "--repetitions", "1"]) == 0
    _, rows = read_csv(out / "noise.csv")
    assert len(rows) == 1


def test_static_experiment_needs_sequence_sets(small, tmp_path, capsys):
    assert cli.main(["experiment", "static", str(small), "-o", str(tmp_path)]) == 1
    assert "sequence_sets" in capsys.readouterr().err
