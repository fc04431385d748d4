"""Batch-sequential search of discrete libraries: SELC, expected improvement and their mixture."""

from .bench import BenchReport, library_ranking, relabel_study, run_benchmark, run_replication
from .ei import expected_improvement, select_top_ei
from .functions import TestFunction, levy4, make_function, paviani5
from .gp import CorrelationParams, FitSettings, GpFit, fit, predict, predict_all
from .mixing import HighValueRegion, cluster_count, ei_share, high_value_region, region_S
from .orchestrator import (
    BatchProposal,
    RunConfig,
    RunError,
    RunState,
    ingest_results,
    init_run,
    propose_batch,
    run_to_budget,
)
from .selc import ForbiddenArray, is_forbidden, level_weights, propose_selc_batch, update_forbidden
from .space import Dataset, DesignSpace, Observation, minimax_design

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "library_ranking",
    "relabel_study",
    "run_benchmark",
    "run_replication",
    "expected_improvement",
    "select_top_ei",
    "TestFunction",
    "levy4",
    "make_function",
    "paviani5",
    "CorrelationParams",
    "FitSettings",
    "GpFit",
    "fit",
    "predict",
    "predict_all",
    "HighValueRegion",
    "cluster_count",
    "ei_share",
    "high_value_region",
    "region_S",
    "BatchProposal",
    "RunConfig",
    "RunError",
    "RunState",
    "ingest_results",
    "init_run",
    "propose_batch",
    "run_to_budget",
    "ForbiddenArray",
    "is_forbidden",
    "level_weights",
    "propose_selc_batch",
    "update_forbidden",
    "Dataset",
    "DesignSpace",
    "Observation",
    "minimax_design",
]
