"""Contextual hierarchical tree bandits for large-scale recommendation.

The context space is gridded into cells; each cell learns an optimistic
binary tree over the item universe (RHT), optionally sharded across storage
units as a forest (DSRHT). A synthetic environment, a regret harness and a
CLI round out the package.
"""

from .dsrht import (
    DsrhtEngine,
    check_unit_condition,
    depth_for_units,
    optimal_unit_exponent,
    select_top_region,
)
from .environment import (
    ContextStream,
    ContextStreamConfig,
    RewardModel,
    RewardModelConfig,
    oracle_best,
)
from .harness import (
    EngineSpec,
    EnvSpec,
    ExperimentConfig,
    RunRecord,
    SummaryReport,
    UniformRandomPolicy,
    accuracy_table,
    baseline_configs,
    build_engine,
    build_items,
    check_engine_invariants,
    csv_text,
    fit_regret_slope,
    run_experiment,
    run_replica,
    storage_counters,
    theoretical_exponent,
    write_csv,
)
from .items import CourseItem, ItemStore, dissimilarity, region_diam, split_region
from .partition import PartitionConfig, compute_slicing_number
from .rht import (
    EngineConfig,
    Recommendation,
    RhtEngine,
    bound_value,
    estimation_value,
    update_mean,
)

__version__ = "0.1.0"

__all__ = [
    "CourseItem",
    "ContextStream",
    "ContextStreamConfig",
    "DsrhtEngine",
    "EngineConfig",
    "EngineSpec",
    "EnvSpec",
    "ExperimentConfig",
    "ItemStore",
    "PartitionConfig",
    "Recommendation",
    "RewardModel",
    "RewardModelConfig",
    "RhtEngine",
    "RunRecord",
    "SummaryReport",
    "UniformRandomPolicy",
    "accuracy_table",
    "baseline_configs",
    "bound_value",
    "build_engine",
    "build_items",
    "check_engine_invariants",
    "check_unit_condition",
    "compute_slicing_number",
    "csv_text",
    "depth_for_units",
    "dissimilarity",
    "estimation_value",
    "fit_regret_slope",
    "optimal_unit_exponent",
    "oracle_best",
    "region_diam",
    "run_experiment",
    "run_replica",
    "select_top_region",
    "split_region",
    "storage_counters",
    "theoretical_exponent",
    "update_mean",
    "write_csv",
]
