"""Simulation-based pre-submission risk assessment."""

from intentkit.feasibility.checker import (
    HIGH, LOW, WARN, ExecutionContext, FeasibilityConfig, FeasibilityVerdict, SimulationError,
    baseline_check, build_contexts, check_feasibility, interference_set, node_hook,
    predict_next_block, simulate, touched,
)

__all__ = [
    "HIGH", "LOW", "WARN", "ExecutionContext", "FeasibilityConfig", "FeasibilityVerdict",
    "SimulationError", "baseline_check", "build_contexts", "check_feasibility",
    "interference_set", "node_hook", "predict_next_block", "simulate", "touched",
]
