"""Scenario files: YAML documents holding a problem instance, controller parameters and run settings.

Parse errors carry the source line and the dotted field path, e.g.
``scenario.yaml:7: agents[1].sensing_range: must be > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import controllers as ctl
from . import targets as tg
from .model import AgentSpec, Scenario, ScenarioError, TargetSpec
from .optimizer import DescentConfig
from .simulator import SimOptions


class ScenarioFileError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None, source: str = "<string>"):
        self.field_path = path
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {path}: {message}" if path else f"{where}: {message}")


@dataclass
class NoiseSettings:
    repetitions: int = 50
    phases: int = 4
    position_noise_scale: float = 0.0
    velocity_noise_scale: float = 0.0
    sample_interval: float = 0.05
    seed: int = 0


@dataclass
class ExperimentSettings:
    static_sequences: list | None = None
    deadzone_window: float = 0.2
    noise: NoiseSettings | None = None


@dataclass
class ScenarioFile:
    scenario: Scenario
    params: ctl.ControllerParams
    sim: SimOptions = field(default_factory=SimOptions)
    optimizer: DescentConfig = field(default_factory=DescentConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    seed: int = 0


# ---------------------------------------------------------------------------
# node walking with source positions

class _Doc:
    """Plain Python view of a YAML node tree plus the line of every field path."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[str, int] = {}
        self._scalars = yaml.SafeLoader("")
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ScenarioFileError(f"malformed YAML ({getattr(exc, 'problem', exc)})",
                                    line=mark.line + 1 if mark else None, source=source) from None
        if root is None:
            raise ScenarioFileError("empty document", source=source)
        self.data = self._convert(root, "")

    def _convert(self, node, path: str):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = k.value
                if key in out:
                    raise self.error("duplicate key", _join(path, key), k.start_mark.line + 1)
                out[key] = self._convert(v, _join(path, key))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, f"{path}[{i}]") for i, v in enumerate(node.value)]
        return self._scalars.construct_object(node)

    def error(self, message: str, path: str, line: int | None = None) -> ScenarioFileError:
        if line is None:
            p = path
            while p and p not in self.lines:
                p = p.rsplit(".", 1)[0] if "." in p else ""
            line = self.lines.get(p)
        return ScenarioFileError(message, path, line, self.source)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


class _Reader:
    def __init__(self, doc: _Doc):
        self.doc = doc

    def mapping(self, obj, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
        if not isinstance(obj, dict):
            raise self.doc.error("expected a mapping", path)
        for k in obj:
            if k not in allowed:
                raise self.doc.error(f"unknown field (allowed: {', '.join(sorted(allowed))})", _join(path, k))
        for k in sorted(required):
            if k not in obj:
                raise self.doc.error(f"missing required field {k!r}", path)
        return obj

    def number(self, obj: dict, key: str, path: str, default=None, cond=None, what: str = "") -> float:
        p = _join(path, key)
        if key not in obj:
            if default is None:
                raise self.doc.error(f"missing required field {key!r}", path)
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.doc.error(f"expected a finite number, got {v!r}", p)
        if cond is not None and not cond(v):
            raise self.doc.error(f"must be {what}, got {v!r}", p)
        return float(v)

    def integer(self, obj: dict, key: str, path: str, default=None, minimum: int | None = None) -> int:
        p = _join(path, key)
        if key not in obj:
            if default is None:
                raise self.doc.error(f"missing required field {key!r}", path)
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.doc.error(f"expected an integer, got {v!r}", p)
        if minimum is not None and v < minimum:
            raise self.doc.error(f"must be >= {minimum}, got {v}", p)
        return v

    def numbers(self, obj, path: str) -> list[float]:
        if not isinstance(obj, list):
            raise self.doc.error("expected a list of numbers", path)
        out = []
        for k, v in enumerate(obj):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise self.doc.error(f"expected a finite number, got {v!r}", f"{path}[{k}]")
            out.append(float(v))
        return out


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 < v < 1


# ---------------------------------------------------------------------------
# parsing

def _trajectory(rd: _Reader, obj, path: str) -> tg.TargetTrajectory:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise rd.doc.error("expected a mapping with a 'kind' field", path)
    kind = obj["kind"]
    if kind == "static":
        rd.mapping(obj, path, {"kind", "position"}, {"position"})
        return tg.Static(rd.number(obj, "position", path))
    if kind == "sinusoid":
        rd.mapping(obj, path, {"kind", "offset", "amplitude", "angular_frequency", "phase"},
                   {"offset", "amplitude", "angular_frequency"})
        return tg.Sinusoid(rd.number(obj, "offset", path), rd.number(obj, "amplitude", path),
                           rd.number(obj, "angular_frequency", path), rd.number(obj, "phase", path, 0.0))
    if kind == "piecewise_linear":
        rd.mapping(obj, path, {"kind", "waypoints"}, {"waypoints"})
        wp_path = _join(path, "waypoints")
        wps = obj["waypoints"]
        if not isinstance(wps, list):
            raise rd.doc.error("expected a list of [time, position] pairs", wp_path)
        pairs = []
        for k, w in enumerate(wps):
            pair = rd.numbers(w, f"{wp_path}[{k}]")
            if len(pair) != 2:
                raise rd.doc.error("expected [time, position]", f"{wp_path}[{k}]")
            pairs.append(tuple(pair))
        try:
            return tg.PiecewiseLinear(tuple(pairs))
        except tg.TrajectoryError as exc:
            raise rd.doc.error(str(exc), wp_path) from None
    raise rd.doc.error(f"unknown trajectory kind {kind!r} (static, sinusoid, piecewise_linear)",
                       _join(path, "kind"))


def _scenario(rd: _Reader, data: dict) -> Scenario:
    T = rd.number(data, "horizon", "", cond=_positive, what="> 0")
    margin = rd.number(data, "separation_margin", "", 0.0, _nonneg, ">= 0")
    agents_raw = data.get("agents")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise rd.doc.error("expected a non-empty list", "agents")
    agents = []
    for j, a in enumerate(agents_raw):
        p = f"agents[{j}]"
        rd.mapping(a, p, {"initial_position", "sensing_range"}, {"initial_position", "sensing_range"})
        agents.append(AgentSpec(rd.number(a, "initial_position", p),
                                rd.number(a, "sensing_range", p, cond=_positive, what="> 0")))
    targets_raw = data.get("targets")
    if not isinstance(targets_raw, list) or not targets_raw:
        raise rd.doc.error("expected a non-empty list", "targets")
    targets = []
    for i, t in enumerate(targets_raw):
        p = f"targets[{i}]"
        rd.mapping(t, p, {"growth_rate", "reduction_rate", "initial_uncertainty", "trajectory"},
                   {"growth_rate", "reduction_rate", "initial_uncertainty", "trajectory"})
        A = rd.number(t, "growth_rate", p, cond=_positive, what="> 0")
        B = rd.number(t, "reduction_rate", p, cond=lambda v: v > A, what=f"> growth_rate ({A!r})")
        R0 = rd.number(t, "initial_uncertainty", p, cond=_nonneg, what=">= 0")
        targets.append(TargetSpec(A, B, R0, _trajectory(rd, t["trajectory"], _join(p, "trajectory"))))
    try:
        return Scenario(tuple(agents), tuple(targets), T, margin)
    except (ScenarioError, tg.TrajectoryError) as exc:
        raise rd.doc.error(str(exc), "targets") from None


def _sequences(rd: _Reader, obj, path: str, n_agents: int, n_targets: int) -> list[list[int]]:
    if not isinstance(obj, list) or len(obj) != n_agents:
        raise rd.doc.error(f"expected one visiting sequence per agent ({n_agents})", path)
    out = []
    for j, seq in enumerate(obj):
        p = f"{path}[{j}]"
        if not isinstance(seq, list) or not seq:
            raise rd.doc.error("expected a non-empty list of target indices", p)
        for k, i in enumerate(seq):
            if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < n_targets:
                raise rd.doc.error(f"expected a target index in [0, {n_targets})", f"{p}[{k}]")
        out.append(list(seq))
    return out


def _controller(rd: _Reader, obj, scenario: Scenario, seed_override: int | None):
    path = "controller"
    rd.mapping(obj, path, {"variant", "phases", "gains", "initial", "seed", "sequences", "agents"},
               {"variant"})
    variant = obj["variant"]
    if variant not in ctl.VARIANTS:
        raise rd.doc.error(f"unknown variant {variant!r} (optimal, practical)", _join(path, "variant"))
    gains = rd.mapping(obj.get("gains", {}), _join(path, "gains"), {"p", "i", "switch_tolerance"})
    gp = _join(path, "gains")
    kp = rd.number(gains, "p", gp, ctl.DEFAULT_GAIN_P, _positive, "> 0")
    ki = rd.number(gains, "i", gp, ctl.DEFAULT_GAIN_I, _positive, "> 0")
    tol = rd.number(gains, "switch_tolerance", gp, ctl.DEFAULT_SWITCH_TOLERANCE, _unit, "in (0, 1)")
    seed = rd.integer(obj, "seed", path, 0)
    if seed_override is not None:
        seed = seed_override
    N, M = scenario.n_agents, scenario.n_targets
    initial = obj.get("initial", "explicit")

    if initial == "random":
        L = rd.integer(obj, "phases", path, minimum=1)
        seqs = ctl.random_sequences(np.random.default_rng(seed), N, M, L)
        return ctl.params_from_sequences(scenario, variant, seqs, kp, ki, tol), seed
    if initial == "sequences":
        seqs = _sequences(rd, obj.get("sequences"), _join(path, "sequences"), N, M)
        return ctl.params_from_sequences(scenario, variant, seqs, kp, ki, tol), seed
    if initial != "explicit":
        raise rd.doc.error(f"unknown initial {initial!r} (explicit, random, sequences)", _join(path, "initial"))

    raw = obj.get("agents")
    ap = _join(path, "agents")
    if not isinstance(raw, list) or len(raw) != N:
        raise rd.doc.error(f"expected one parameter block per agent ({N})", ap)
    agents = []
    for j, a in enumerate(raw):
        p = f"{ap}[{j}]"
        keys = {"combinations", "durations"}
        if variant == ctl.OPTIMAL:
            keys = keys | {"switching_points"}
        rd.mapping(a, p, keys | ({"gains"} if variant == ctl.PRACTICAL else set()), keys)
        if not isinstance(a["combinations"], list):
            raise rd.doc.error("expected a list of weight vectors", _join(p, "combinations"))
        combos = [ctl.TrackingCombination(tuple(rd.numbers(c, f"{p}.combinations[{l}]")))
                  for l, c in enumerate(a["combinations"])]
        for l, c in enumerate(combos):
            if len(c.weights) != M:
                raise rd.doc.error(f"expected {M} weights", f"{p}.combinations[{l}]")
            bad = c.violations()
            if bad:
                raise rd.doc.error(bad[0], f"{p}.combinations[{l}]")
        durs = rd.numbers(a["durations"], _join(p, "durations"))
        if len(durs) != len(combos):
            raise rd.doc.error("needs one duration per combination", _join(p, "durations"))
        for l, d in enumerate(durs):
            if not 0.0 <= d <= scenario.horizon:
                raise rd.doc.error(f"must lie in [0, {scenario.horizon!r}]", f"{p}.durations[{l}]")
        if variant == ctl.OPTIMAL:
            psis = rd.numbers(a["switching_points"], _join(p, "switching_points"))
            if len(psis) != len(combos):
                raise rd.doc.error("needs one switching point per combination", _join(p, "switching_points"))
            agents.append(ctl.OptimalAgentParams(tuple(psis), tuple(combos), tuple(durs)))
        else:
            own = rd.mapping(a.get("gains", {}), _join(p, "gains"), {"p", "i", "switch_tolerance"})
            gpp = _join(p, "gains")
            agents.append(ctl.PracticalAgentParams(
                tuple(combos), tuple(durs),
                rd.number(own, "p", gpp, kp, _positive, "> 0"),
                rd.number(own, "i", gpp, ki, _positive, "> 0"),
                rd.number(own, "switch_tolerance", gpp, tol, _unit, "in (0, 1)")))
    return ctl.ControllerParams(variant, tuple(agents)), seed


def _sim(rd: _Reader, obj) -> SimOptions:
    rd.mapping(obj, "simulator", {"step", "event_tolerance", "max_events"})
    step = rd.number(obj, "step", "simulator", math.nan)
    tol = rd.number(obj, "event_tolerance", "simulator", math.nan)
    for k, v in (("step", step), ("event_tolerance", tol)):
        if not math.isnan(v) and not v > 0:
            raise rd.doc.error(f"must be > 0, got {v!r}", f"simulator.{k}")
    return SimOptions(None if math.isnan(step) else step, None if math.isnan(tol) else tol,
                      rd.integer(obj, "max_events", "simulator", 10 ** 6, minimum=1))


def _optimizer(rd: _Reader, obj, seed: int) -> DescentConfig:
    p = "optimizer"
    rd.mapping(obj, p, {"armijo_c1", "backtrack_factor", "max_backtracks", "initial_step",
                        "max_iterations", "stall_tolerance"})
    d = DescentConfig()
    return DescentConfig(
        armijo_c1=rd.number(obj, "armijo_c1", p, d.armijo_c1, _unit, "in (0, 1)"),
        backtrack_factor=rd.number(obj, "backtrack_factor", p, d.backtrack_factor, _unit, "in (0, 1)"),
        max_backtracks=rd.integer(obj, "max_backtracks", p, d.max_backtracks, minimum=0),
        initial_step=rd.number(obj, "initial_step", p, d.initial_step, _positive, "> 0"),
        max_iterations=rd.integer(obj, "max_iterations", p, d.max_iterations, minimum=0),
        stall_tolerance=rd.number(obj, "stall_tolerance", p, d.stall_tolerance, _nonneg, ">= 0"),
        seed=seed)


def _experiment(rd: _Reader, obj, scenario: Scenario) -> ExperimentSettings:
    rd.mapping(obj, "experiment", {"static", "deadzone", "noise"})
    out = ExperimentSettings()
    if "static" in obj:
        p = "experiment.static"
        st = rd.mapping(obj["static"], p, {"sequence_sets"}, {"sequence_sets"})
        sets = st["sequence_sets"]
        if not isinstance(sets, list) or not sets:
            raise rd.doc.error("expected a non-empty list", _join(p, "sequence_sets"))
        out.static_sequences = [_sequences(rd, s, f"{p}.sequence_sets[{k}]", scenario.n_agents, scenario.n_targets)
                                for k, s in enumerate(sets)]
    if "deadzone" in obj:
        p = "experiment.deadzone"
        dz = rd.mapping(obj["deadzone"], p, {"window"})
        out.deadzone_window = rd.number(dz, "window", p, 0.2, lambda v: 0 < v <= 1, "in (0, 1]")
    if "noise" in obj:
        p = "experiment.noise"
        nz = rd.mapping(obj["noise"], p, {"repetitions", "phases", "position_noise_scale",
                                          "velocity_noise_scale", "sample_interval", "seed"})
        out.noise = NoiseSettings(
            rd.integer(nz, "repetitions", p, 50, minimum=1),
            rd.integer(nz, "phases", p, 4, minimum=1),
            rd.number(nz, "position_noise_scale", p, 0.0, _nonneg, ">= 0"),
            rd.number(nz, "velocity_noise_scale", p, 0.0, _nonneg, ">= 0"),
            rd.number(nz, "sample_interval", p, 0.05, _positive, "> 0"),
            rd.integer(nz, "seed", p, 0))
    return out


def loads(text: str, source: str = "<string>", seed: int | None = None) -> ScenarioFile:
    """Parse a scenario document; ``seed`` overrides the controller seed."""
    doc = _Doc(text, source)
    rd = _Reader(doc)
    data = rd.mapping(doc.data, "", {"horizon", "separation_margin", "agents", "targets", "controller",
                                     "simulator", "optimizer", "experiment"},
                      {"horizon", "agents", "targets", "controller"})
    scenario = _scenario(rd, data)
    params, seed = _controller(rd, data["controller"], scenario, seed)
    errs = ctl.validate_params(params, scenario)
    if errs:
        raise doc.error(errs[0], "controller")
    sim = _sim(rd, data.get("simulator", {}))
    # descent runs use the file's simulator settings
    opt = replace(_optimizer(rd, data.get("optimizer", {}), seed), sim_options=sim)
    return ScenarioFile(scenario, params, sim, opt,
                        _experiment(rd, data.get("experiment", {}), scenario),
                        seed)


def load(path: str | Path, seed: int | None = None) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioFileError(f"cannot read file ({exc.strerror})", source=str(path)) from None
    return loads(text, str(path), seed)


# ---------------------------------------------------------------------------
# serialization

def _traj_dict(traj) -> dict:
    if isinstance(traj, tg.Static):
        return {"kind": "static", "position": traj.position}
    if isinstance(traj, tg.Sinusoid):
        return {"kind": "sinusoid", "offset": traj.offset, "amplitude": traj.amplitude,
                "angular_frequency": traj.angular_frequency, "phase": traj.phase}
    return {"kind": "piecewise_linear", "waypoints": [list(w) for w in traj.waypoints]}


def _params_dict(params: ctl.ControllerParams, seed: int) -> dict:
    agents = []
    for a in params.agents:
        d: dict[str, Any] = {"combinations": [list(c.weights) for c in a.combinations],
                             "durations": list(a.durations)}
        if params.variant == ctl.OPTIMAL:
            d["switching_points"] = list(a.switching_points)
        else:
            d["gains"] = {"p": a.gain_p, "i": a.gain_i, "switch_tolerance": a.switch_tolerance}
        agents.append(d)
    return {"variant": params.variant, "initial": "explicit", "seed": seed, "agents": agents}


def to_dict(sf: ScenarioFile) -> dict:
    sc = sf.scenario
    out: dict[str, Any] = {
        "horizon": sc.horizon,
        "separation_margin": sc.separation_margin,
        "agents": [{"initial_position": a.initial_position, "sensing_range": a.sensing_range}
                   for a in sc.agents],
        "targets": [{"growth_rate": t.growth_rate, "reduction_rate": t.reduction_rate,
                     "initial_uncertainty": t.initial_uncertainty,
                     "trajectory": _traj_dict(t.trajectory)} for t in sc.targets],
        "controller": _params_dict(sf.params, sf.seed),
    }
    sim = {k: v for k, v in (("step", sf.sim.step), ("event_tolerance", sf.sim.event_tolerance))
           if v is not None}
    sim["max_events"] = sf.sim.max_events
    out["simulator"] = sim
    o = sf.optimizer
    out["optimizer"] = {"armijo_c1": o.armijo_c1, "backtrack_factor": o.backtrack_factor,
                        "max_backtracks": o.max_backtracks, "initial_step": o.initial_step,
                        "max_iterations": o.max_iterations, "stall_tolerance": o.stall_tolerance}
    ex = sf.experiment
    exp: dict[str, Any] = {"deadzone": {"window": ex.deadzone_window}}
    if ex.static_sequences is not None:
        exp["static"] = {"sequence_sets": ex.static_sequences}
    if ex.noise is not None:
        n = ex.noise
        exp["noise"] = {"repetitions": n.repetitions, "phases": n.phases,
                        "position_noise_scale": n.position_noise_scale,
                        "velocity_noise_scale": n.velocity_noise_scale,
                        "sample_interval": n.sample_interval, "seed": n.seed}
    out["experiment"] = exp
    return out


def dumps(sf: ScenarioFile) -> str:
    # PyYAML writes floats with repr, so values survive a round trip exactly
    return yaml.safe_dump(to_dict(sf), sort_keys=False, default_flow_style=None, width=100)


def with_params(sf: ScenarioFile, params: ctl.ControllerParams) -> ScenarioFile:
    return ScenarioFile(sf.scenario, params, sf.sim, sf.optimizer, sf.experiment, sf.seed)
