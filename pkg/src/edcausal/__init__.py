"""Causal discovery and treatment-effect estimation for student learning data."""
from .core import (
    AggregatedGraph,
    CateQuery,
    CateResult,
    RelationCategory,
    SyntheticDataset,
    TemporalGraph,
    Trajectory,
    aggregate,
    relation_category,
)
from .discovery import discover, estimate_temporal_graph, fit_var
from .inference import FoldTimeScm, Task4Query, ab_ground_truth, estimate_cate, estimate_cate_task4, fit_scm
from .scoring import f1_discovery, f1_mean, rmse_task2, rmse_task4, validate_submission
from .simulator import SimConfig, cate_oracle, generate_graph, generate_queries, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "AggregatedGraph",
    "CateQuery",
    "CateResult",
    "RelationCategory",
    "SyntheticDataset",
    "TemporalGraph",
    "Trajectory",
    "aggregate",
    "relation_category",
    "discover",
    "estimate_temporal_graph",
    "fit_var",
    "FoldTimeScm",
    "Task4Query",
    "ab_ground_truth",
    "estimate_cate",
    "estimate_cate_task4",
    "fit_scm",
    "f1_discovery",
    "f1_mean",
    "rmse_task2",
    "rmse_task4",
    "validate_submission",
    "SimConfig",
    "cate_oracle",
    "generate_graph",
    "generate_queries",
    "simulate_dataset",
]
