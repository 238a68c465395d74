"""Operator entry point: pipeline composition, workload generators and evaluation harnesses."""

from intentkit.workbench.evaluation import (
    CheckerResult, CheckerWorkload, Confusion, EvalMetrics, SpeedupResult, evaluate_checker,
    evaluate_speedup,
)
from intentkit.workbench.generate import (
    FlowConfig, FlowGenerator, GeneratedProgram, GenerationExhausted, GeneratorConfig,
    generate_flows, generate_program,
)
from intentkit.workbench.genesis import EXAMPLE_PROGRAM, motivating_genesis, workbench_genesis
from intentkit.workbench.pipeline import (
    PipelineError, PipelineOptions, PipelineResult, Session, run_pipeline,
)

__all__ = [
    "CheckerResult", "CheckerWorkload", "Confusion", "EvalMetrics", "EXAMPLE_PROGRAM", "FlowConfig",
    "FlowGenerator", "GeneratedProgram", "GenerationExhausted", "GeneratorConfig", "PipelineError",
    "PipelineOptions", "PipelineResult", "Session", "SpeedupResult", "evaluate_checker",
    "evaluate_speedup", "generate_flows", "generate_program", "motivating_genesis", "run_pipeline",
    "workbench_genesis",
]
