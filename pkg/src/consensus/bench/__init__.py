"""Benchmark tooling: problem files, synthetic scenes, metrics and reports."""
from .io import Problem, ProblemFormatError, load_problem, save_problem
from .metrics import EvalRecord, evaluate_run, failure_threshold, model_error
from .report import emit_report, summarize
from .synthetic import SyntheticProblem, SyntheticSceneSpec, generate_synthetic

__all__ = ["Problem", "ProblemFormatError", "load_problem", "save_problem", "EvalRecord",
           "evaluate_run", "failure_threshold", "model_error", "emit_report", "summarize",
           "SyntheticProblem", "SyntheticSceneSpec", "generate_synthetic"]
