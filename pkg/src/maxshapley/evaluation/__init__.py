"""Datasets, agreement metrics and experiment orchestration."""

from maxshapley.evaluation.dataset import AnnotatedSample, binarize_graded_relevance, load_dataset
from maxshapley.evaluation.experiment import (
    ChatBundle,
    ExperimentConfig,
    ExperimentReport,
    MethodSpec,
    OracleBundle,
    PlantedBundle,
    run_experiment,
    write_report,
)
from maxshapley.evaluation.metrics import jaccard_at_k, kendall_tau_b, top_k

__all__ = [
    "AnnotatedSample",
    "ChatBundle",
    "ExperimentConfig",
    "ExperimentReport",
    "MethodSpec",
    "OracleBundle",
    "PlantedBundle",
    "binarize_graded_relevance",
    "jaccard_at_k",
    "kendall_tau_b",
    "load_dataset",
    "run_experiment",
    "top_k",
    "write_report",
]
