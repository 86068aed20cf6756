"""Persistent monitoring of moving targets in one dimension: simulation, IPA gradients, optimization."""

from .model import AgentSpec, Scenario, ScenarioError, TargetSpec, cost
from .targets import PiecewiseLinear, Sinusoid, Static
from .controllers import (ControllerParams, OptimalAgentParams, PracticalAgentParams,
                          TrackingCombination)
from .simulator import SimOptions, SimOutput, simulate

__all__ = [
    "AgentSpec", "Scenario", "ScenarioError", "TargetSpec", "cost",
    "PiecewiseLinear", "Sinusoid", "Static",
    "ControllerParams", "OptimalAgentParams", "PracticalAgentParams", "TrackingCombination",
    "SimOptions", "SimOutput", "simulate",
]
