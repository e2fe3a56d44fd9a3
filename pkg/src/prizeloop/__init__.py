"""Prize-collecting TSP / Steiner tree approximation with exact LP machinery."""

from prizeloop.instance import Instance, generate_instance, load_instance, metric_closure
from prizeloop.lp import LpSolution, solve_relaxation
from prizeloop.algorithms import (
    TourResult,
    run_alg1,
    run_threshold_classic,
    run_tree2_pcst,
    run_tree2_pctsp,
    select_threshold_deterministic,
)

__all__ = [
    "Instance",
    "LpSolution",
    "TourResult",
    "generate_instance",
    "load_instance",
    "metric_closure",
    "run_alg1",
    "run_threshold_classic",
    "run_tree2_pcst",
    "run_tree2_pctsp",
    "select_threshold_deterministic",
    "solve_relaxation",
]

__version__ = "0.1.0"
