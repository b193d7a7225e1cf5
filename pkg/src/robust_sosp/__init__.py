"""Outlier-robust second-order optimization and low-rank matrix sensing.

A filter-based robust mean estimator supplies inexact gradient and Hessian
oracles to a randomized second-order stationary point solver; the combination
recovers low-rank matrices from adversarially corrupted linear measurements,
exactly in the noiseless case.
"""

from .corruption import (
    STRATEGIES,
    CorruptionPlan,
    CounterexampleDetails,
    GroundTruth,
    corrupt,
    generate_ground_truth,
    sample_clean,
)
from .errors import (
    BadSpectrum,
    ConfigInvalid,
    DimensionMismatch,
    EmptyInput,
    EpsOutOfRange,
    EpsTooSmall,
    IterCapError,
    NonFinite,
    OracleFailure,
    RegionViolation,
    RequiresNoiseless,
    RobustSospError,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    read_dataset,
    run_experiment,
    sweep,
    write_dataset,
)
from .robust_mean import (
    EstimateResult,
    find_filter_threshold,
    robust_mean_estimate,
    stability_audit,
)
from .sensing import (
    ProblemSpec,
    RecoveryResult,
    SensingSample,
    covariance_bound_gradient,
    covariance_bound_hessian,
    dist_to_solution_set,
    local_refine,
    population_objective,
    recover,
    robust_oracles,
    sample_gradient,
    sample_hessian,
    sample_objective,
    solve_global,
    spectral_recover,
    stack_samples,
)
from .sosp import (
    OracleSuite,
    SolverParams,
    SolveTrace,
    StepRecord,
    find_sosp,
    min_eig_pair,
)

__all__ = [
    "BadSpectrum", "ConfigInvalid", "CorruptionPlan", "CounterexampleDetails",
    "DimensionMismatch", "EmptyInput", "EpsOutOfRange", "EpsTooSmall",
    "EstimateResult", "ExperimentConfig", "GroundTruth", "IterCapError",
    "NonFinite", "OracleFailure", "OracleSuite", "ProblemSpec",
    "RecoveryResult", "RegionViolation", "RequiresNoiseless",
    "RobustSospError", "RunReport", "STRATEGIES", "SensingSample",
    "SolveTrace", "SolverParams", "StepRecord", "corrupt",
    "covariance_bound_gradient", "covariance_bound_hessian",
    "dist_to_solution_set", "find_filter_threshold", "find_sosp",
    "generate_ground_truth", "local_refine", "min_eig_pair",
    "population_objective", "read_dataset", "recover", "robust_mean_estimate",
    "robust_oracles", "run_experiment", "sample_clean", "sample_gradient",
    "sample_hessian", "sample_objective", "solve_global", "spectral_recover",
    "stability_audit", "stack_samples", "sweep", "write_dataset",
]

__version__ = "0.1.0"
