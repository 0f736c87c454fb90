"""Distributionally robust logistic regression over mixed feature spaces.

Training minimizes the worst-case expected log-loss over a transport-metric
ball around the empirical distribution.  Categorical features stay on their
one-hot domain: perturbations move a point between valid configurations
instead of through fractional space.  The full program is exponential-cone
representable; a column-and-constraint engine solves it at scale.
"""

from .baselines import (
    BaselineConfig,
    classification_error,
    predict,
    predict_batch,
    train_lr,
    train_regularized_lr,
)
from .cutgen import EasingConfig, EngineConfig, EngineError, RunResult, RunTrace, run
from .data import (
    DataError,
    Dataset,
    DatasetEncoding,
    DatasetSchema,
    encode_csv,
    generate_synthetic,
    ingest_csv,
    k_folds,
    split,
)
from .experiments import (
    ExperimentError,
    benchmark,
    cross_validate,
    default_epsilon_grid,
    default_gamma_grid,
    runtime_study,
    stylized_comparison,
    train_dro,
)
from .formulation import (
    FormulationError,
    FormulationOptions,
    MasterSolution,
    ModelParams,
    build_continuous_model,
    build_monolithic,
    build_reduced_master,
    empirical_log_loss,
    evaluate_worst_case_loss,
    solve_monolithic,
)
from .metric import GroundMetricConfig, d_categorical, dual_norm, ground_distance
from .separation import ViolationReport, most_violated, separate_all, violation_value
from .solver import SolveResult, SolverConfig, SolverFailure, solve

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "BaselineConfig",
    "Dataset",
    "DatasetEncoding",
    "DatasetSchema",
    "EasingConfig",
    "EngineConfig",
    "EngineError",
    "ExperimentError",
    "FormulationError",
    "FormulationOptions",
    "GroundMetricConfig",
    "MasterSolution",
    "ModelParams",
    "RunResult",
    "RunTrace",
    "SolveResult",
    "SolverConfig",
    "SolverFailure",
    "ViolationReport",
    "benchmark",
    "build_continuous_model",
    "build_monolithic",
    "build_reduced_master",
    "classification_error",
    "cross_validate",
    "d_categorical",
    "default_epsilon_grid",
    "default_gamma_grid",
    "dual_norm",
    "empirical_log_loss",
    "encode_csv",
    "evaluate_worst_case_loss",
    "generate_synthetic",
    "ground_distance",
    "ingest_csv",
    "k_folds",
    "most_violated",
    "predict",
    "predict_batch",
    "run",
    "runtime_study",
    "separate_all",
    "solve",
    "solve_monolithic",
    "split",
    "stylized_comparison",
    "train_dro",
    "train_lr",
    "train_regularized_lr",
    "violation_value",
    "__version__",
]
