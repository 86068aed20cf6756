"""Command-line entry point: ``permon {validate,simulate,optimize,experiment}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import controllers as ctl
from . import oracle
from . import scenario_io as sio
from .ipa import gradient
from .model import cost, validate_assumptions
from .optimizer import optimize
from .simulator import SimOptions, simulate

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Shortest round-trip text for numbers; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, ctl.ControllerParams):
        return sio._params_dict(obj, 0)
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


def _load(args) -> sio.ScenarioFile:
    sf = sio.load(args.scenario, seed=args.seed)
    sim = sf.sim
    if args.step is not None:
        sim = SimOptions(args.step, sim.event_tolerance, sim.max_events)
    opt = sf.optimizer
    if getattr(args, "max_iters", None) is not None:
        opt = dataclasses.replace(opt, max_iterations=args.max_iters)
    opt = dataclasses.replace(opt, sim_options=sim)
    exp = sf.experiment
    if args.seed is not None and exp.noise is not None:
        exp = dataclasses.replace(exp, noise=dataclasses.replace(exp.noise, seed=args.seed))
    return sio.ScenarioFile(sf.scenario, sf.params, sim, opt, exp, sf.seed)


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args) -> int:
    sf = _load(args)
    sc = sf.scenario
    step = sf.sim.resolve(sc.horizon)[0]
    rep = validate_assumptions(sc, step)
    print(f"parsed {args.scenario}: N={sc.n_agents} M={sc.n_targets} T={fmt(sc.horizon)} "
          f"variant={sf.params.variant} L={[a.n_phases for a in sf.params.agents]}")
    print(f"max target speed {rep.max_speed:.6g} (target {rep.max_speed_target}, t={rep.max_speed_time:.6g}): "
          f"{'ok' if rep.speed_ok else 'WARNING'}")
    if rep.min_separation_pair is not None:
        print(f"min target separation {rep.min_separation:.6g} vs required {rep.required_separation:.6g}: "
              f"{'ok' if rep.separation_ok else 'WARNING'}")
    for w in rep.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def states_header(N: int, M: int) -> list[str]:
    return (["time"] + [f"s_{j + 1}" for j in range(N)] + [f"R_{i + 1}" for i in range(M)]
            + [f"u_{j + 1}" for j in range(N)] + [f"theta_{i + 1}" for i in range(M)])


def _write_simulation(out: Path, sf: sio.ScenarioFile, sim) -> None:
    N, M = sf.scenario.n_agents, sf.scenario.n_targets
    rows = (np.concatenate([[t], s, R, u, th]) for t, s, R, u, th in
            zip(sim.time, sim.positions, sim.uncertainty, sim.control, sim.target_positions))
    _write_csv(out / "states.csv", states_header(N, M), rows)
    _write_csv(out / "events.csv", ["time", "kind", "agent_index", "target_index", "phase_index"],
               ([e.time, e.kind.value, e.agent, e.target, e.phase] for e in sim.events))


def cmd_simulate(args) -> int:
    sf = _load(args)
    sim = simulate(sf.scenario, sf.params, sf.sim)
    out = _outdir(args)
    _write_simulation(out, sf, sim)
    # quadrature over the exported samples, not the integrator's running sum
    J = cost(sim)
    _write_json(out / "summary.json", {"cost": J, "events": sim.n_events, "config": sio.to_dict(sf)})
    print(f"J = {fmt(J)}  events = {sim.n_events}  -> {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    sf = _load(args)
    sc, cfg = sf.scenario, sf.optimizer
    rows = []

    def log(rec):
        row = [rec.iteration, rec.cost, rec.grad_norm, rec.step, rec.backtracks]
        if args.grad_check:
            ipa = gradient(sc, rec.params, options=sf.sim).gradient
            fd = oracle.finite_diff_gradient(sc, rec.params, options=sf.sim)
            ok, good = oracle.gradient_agreement(ipa, fd)
            diff = np.abs(ipa - fd.gradient)[fd.comparable]
            row += [float(diff.max()) if diff.size else 0.0, int(fd.comparable.sum()), ok]
        rows.append(row)
        print(f"iter {rec.iteration:3d}  J = {rec.cost:.10g}  |g| = {rec.grad_norm:.4g}", file=sys.stderr)

    final, recs = optimize(sc, sf.params, cfg, callback=log)
    out = _outdir(args)
    header = ["iteration", "J", "grad_norm", "step", "backtracks"]
    if args.grad_check:
        header += ["fd_max_abs_diff", "fd_compared", "fd_agree"]
    _write_csv(out / "iterates.csv", header, rows)
    snap = sio.with_params(sf, final)
    (out / "final.yaml").write_text(sio.dumps(snap))
    _write_json(out / "summary.json", {"initial_cost": recs[0].cost, "final_cost": recs[-1].cost,
                                       "iterations": len(recs) - 1, "status": recs[-1].status,
                                       "config": sio.to_dict(sf)})
    print(f"J: {fmt(recs[0].cost)} -> {fmt(recs[-1].cost)} in {len(recs) - 1} iterations -> {out}")
    if args.grad_check and not all(r[-1] for r in rows):
        print("gradient check: disagreement found", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(args) -> int:
    sf = _load(args)
    sc, cfg, ex = sf.scenario, sf.optimizer, sf.experiment
    if args.kind == "static":
        if ex.static_sequences is None:
            raise sio.ScenarioFileError("static experiment needs experiment.static.sequence_sets",
                                        source=str(args.scenario))
        gains = sf.params.agents[0] if sf.params.variant == ctl.PRACTICAL else None
        kw = {} if gains is None else {"gain_p": gains.gain_p, "gain_i": gains.gain_i,
                                        "switch_tolerance": gains.switch_tolerance}
        rep = oracle.run_static_experiment(sc, ex.static_sequences, cfg, **kw)
    elif args.kind == "deadzone":
        rep = oracle.run_deadzone_experiment(sc, sf.params, cfg, window=ex.deadzone_window)
    else:
        if ex.noise is None:
            raise sio.ScenarioFileError("noise experiment needs an experiment.noise section",
                                        source=str(args.scenario))
        n = ex.noise
        model = oracle.NoiseModel(n.position_noise_scale, n.velocity_noise_scale, n.sample_interval, n.seed)
        reps = args.repetitions if args.repetitions is not None else n.repetitions
        rep = oracle.run_noise_experiment(
            sc, model, reps, n.phases, cfg,
            progress=lambda k: print(f"repetition {k + 1}/{reps}", file=sys.stderr))
    out = _outdir(args)
    _write_csv(out / f"{args.kind}.csv", rep.columns, rep.rows)
    _write_json(out / f"{args.kind}_summary.json",
                {"kind": rep.kind, "summary": rep.summary, "checks": rep.checks, "passed": rep.passed,
                 "config": sio.to_dict(sf)})
    for name, ok in rep.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p.add_argument("scenario", help="scenario YAML file")
    p.add_argument("--seed", type=int, help="override the controller and noise seeds")
    p.add_argument("--step", type=float, help="override the simulator step")
    p.add_argument("--output", "-o", default="out", help="output directory (default: out)")
    return p


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permon", description="Persistent monitoring simulator and optimizer.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("validate", help="parse a scenario and check assumptions"))
    _common(sub.add_parser("simulate", help="simulate and export states, events and summary"))
    po = _common(sub.add_parser("optimize", help="run gradient descent from the file's parameters"))
    po.add_argument("--max-iters", type=int, help="override optimizer.max_iterations")
    po.add_argument("--grad-check", action="store_true", help="compare IPA and finite differences per iterate")
    pe = sub.add_parser("experiment", help="run a static, deadzone or noise experiment")
    pe.add_argument("kind", choices=["static", "deadzone", "noise"])
    _common(pe)
    pe.add_argument("--max-iters", type=int, help="override optimizer.max_iterations")
    pe.add_argument("--repetitions", type=int, help="override experiment.noise.repetitions")
    return p


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate,
            "optimize": cmd_optimize, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except sio.ScenarioFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
