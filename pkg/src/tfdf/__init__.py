"""Kernel domain adaptation with mean/covariance alignment, manifold
regularization and a class-confusion penalty."""

from .data_io import TaskPair, load_task, preprocess
from .harness import ExperimentConfig, run_ablation, run_sweep, run_task
from .objective import ObjectiveParams
from .solver import SolverConfig, solve_tfdf, solve_tfdf_v

__all__ = [
    "ExperimentConfig",
    "ObjectiveParams",
    "SolverConfig",
    "TaskPair",
    "load_task",
    "preprocess",
    "run_ablation",
    "run_sweep",
    "run_task",
    "solve_tfdf",
    "solve_tfdf_v",
]
