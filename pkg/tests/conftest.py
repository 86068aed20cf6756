"""Shared fixtures plus a suite-wide audit of every optimizer run.

Each call to ``optimize`` (directly, through experiments or through the CLI) is
wrapped: accepted iterates are checked for nonincreasing cost, simplex
weights, durations in ``[0, T]`` and nonnegative uncertainty at every
integration step.  The acceptance module reads the totals at the end.
"""

from __future__ import annotations

import numpy as np
import pytest

from permon import cli, controllers as ctl, optimizer, oracle


class OptimizerAudit:
    def __init__(self):
        self.runs = 0
        self.iterates = 0
        self.violations: list[str] = []

    def check(self, scenario, records):
        self.runs += 1
        T = scenario.horizon
        prev = None
        for rec in records:
            if rec.status == "stall":
                continue
            self.iterates += 1
            if prev is not None and rec.cost > prev:
                self.violations.append(f"cost rose {prev!r} -> {rec.cost!r} at iteration {rec.iteration}")
            prev = rec.cost
            for a in rec.params.agents:
                for c in a.combinations:
                    w = c.as_array()
                    if np.any(w < -1e-9) or np.any(w > 1 + 1e-9) or abs(w.sum() - 1) > 1e-9:
                        self.violations.append(f"alpha {w.tolist()} off the simplex")
                for d in a.durations:
                    if not 0.0 <= d <= T:
                        self.violations.append(f"duration {d!r} outside [0, {T!r}]")
            # smallest R_i over every integration step of the accepted run
            if not rec.min_uncertainty >= 0.0:
                self.violations.append(f"uncertainty {rec.min_uncertainty!r} < 0")


AUDIT = OptimizerAudit()
RESULTS: dict[int, tuple[str, bool, str]] = {}

_original = optimizer.optimize


def _audited(scenario, params, config=None, noise=None, callback=None, freeze_alpha=False):
    final, records = _original(scenario, params, config, noise, callback, freeze_alpha)
    AUDIT.check(scenario, records)
    return final, records


@pytest.fixture(scope="session", autouse=True)
def audit_optimizer_runs():
    mp = pytest.MonkeyPatch()
    for mod in (optimizer, oracle, cli):
        mp.setattr(mod, "optimize", _audited)
    yield AUDIT
    mp.undo()


def pytest_collection_modifyitems(items):
    # suite-wide checks read the audit, so they run last
    last = [it for it in items if "suite_wide" in it.keywords]
    rest = [it for it in items if "suite_wide" not in it.keywords]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "suite_wide: reads state gathered by the whole run")


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        name, ok, detail = RESULTS[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def one_static_target():
    from permon import AgentSpec, Scenario, Static, TargetSpec
    return Scenario([AgentSpec(0.0, 1.0)], [TargetSpec(1.0, 3.0, 1.0, Static(0.0))], 2.0)


@pytest.fixture
def sit_on_target():
    return ctl.ControllerParams("optimal", [ctl.OptimalAgentParams([0.0], [[1.0]], [2.0])])
