"""Pipeline decomposition, task scheduling and push-based execution."""
from .pipeline import Pipeline, PipelineDAG, build_pipelines
from .profiler import CATEGORIES, COMPUTE_CATEGORIES, NullProfiler, Profiler, ProfileReport
from .runtime import ExecContext, Task, execute, push

__all__ = [
    "CATEGORIES", "COMPUTE_CATEGORIES", "ExecContext", "NullProfiler", "Pipeline", "PipelineDAG",
    "ProfileReport", "Profiler", "Task", "build_pipelines", "execute", "push",
]
