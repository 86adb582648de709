"""Sparse boosting over multiple datasets with commonality detection."""

from .data import (
    ALGORITHMS,
    MODELS,
    BoostConfig,
    CoefficientState,
    DatasetBundle,
    FitResult,
    GroupStructure,
    NumericError,
    ParseError,
    ValidationError,
    all_common_partition,
    canonical_partition,
    load_bundles,
    load_dataset_csv,
    partition_refresh,
    read_dataset_csv,
    read_groups_tsv,
    singleton_partitions,
    split_class,
    standardize_columns,
    validate,
    write_dataset_csv,
    write_groups_tsv,
)
from .losses import (
    LossContext,
    aft_loss,
    build_context,
    km_weights,
    lr_loss,
    optimal_increment_joint,
    optimal_increment_single,
    weighted_loss,
)
from .boosting import (
    Candidate,
    PenaltySpec,
    candidate_set,
    cd_objective,
    cd_sboost_fit,
    commonality_penalty,
    fit,
    int_sboost_fit,
    pool_sboost_fit,
    sboost_fit,
    sep_sboost_fit,
)
from .tuning import LambdaGrid, default_lambda_grid, hdbic, select_lambda
from .simulate import (
    CalibrationError,
    GroundTruth,
    SimDesign,
    gen_covariates,
    gen_responses,
    gen_small_example,
    gen_truth,
    group_sizes,
    scenario_counts,
    simulate_replicate,
    small_example_design,
    true_covariance,
    write_simulation,
)
from .metrics import (
    MetricReport,
    benchmark,
    ermse,
    group_tp_fp,
    logrank_score,
    ooi,
    prmse_aft,
    prmse_lr,
    stability,
    variable_tp_fp,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "MODELS",
    "BoostConfig",
    "Candidate",
    "CalibrationError",
    "CoefficientState",
    "DatasetBundle",
    "FitResult",
    "GroundTruth",
    "GroupStructure",
    "LambdaGrid",
    "LossContext",
    "MetricReport",
    "NumericError",
    "ParseError",
    "PenaltySpec",
    "SimDesign",
    "ValidationError",
    "aft_loss",
    "all_common_partition",
    "benchmark",
    "build_context",
    "candidate_set",
    "canonical_partition",
    "cd_objective",
    "cd_sboost_fit",
    "commonality_penalty",
    "default_lambda_grid",
    "ermse",
    "fit",
    "gen_covariates",
    "gen_responses",
    "gen_small_example",
    "gen_truth",
    "group_sizes",
    "group_tp_fp",
    "hdbic",
    "int_sboost_fit",
    "km_weights",
    "load_bundles",
    "load_dataset_csv",
    "logrank_score",
    "lr_loss",
    "ooi",
    "optimal_increment_joint",
    "optimal_increment_single",
    "partition_refresh",
    "pool_sboost_fit",
    "prmse_aft",
    "prmse_lr",
    "read_dataset_csv",
    "read_groups_tsv",
    "sboost_fit",
    "scenario_counts",
    "select_lambda",
    "sep_sboost_fit",
    "simulate_replicate",
    "singleton_partitions",
    "small_example_design",
    "split_class",
    "stability",
    "standardize_columns",
    "true_covariance",
    "validate",
    "variable_tp_fp",
    "weighted_loss",
    "write_dataset_csv",
    "write_groups_tsv",
    "write_simulation",
]
