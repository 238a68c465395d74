"""Dependency graph construction, pruning and concurrent execution."""

from intentkit.optimizer.executor import (
    EXECUTED, FAILED, SKIPPED, ExecutionReport, ExecutorConfig, NodeOutcome, auto_confirm,
    execute_graph,
)
from intentkit.optimizer.graph import (
    AssetFlowIndex, DependencyGraph, PruneRecord, base_balances_for, build_dependency_graph,
)
from intentkit.optimizer.knapsack import fits, greedy_knapsack, multiple_knapsack

__all__ = [
    "EXECUTED", "FAILED", "SKIPPED", "AssetFlowIndex", "DependencyGraph", "ExecutionReport",
    "ExecutorConfig", "NodeOutcome", "PruneRecord", "auto_confirm", "base_balances_for",
    "build_dependency_graph", "execute_graph", "fits", "greedy_knapsack", "multiple_knapsack",
]
