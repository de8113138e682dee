"""Relaxation-plus-rounding for combinatorial optimization with entry-wise concave relaxations."""

__version__ = "0.1.0"

from .ewconcave import (
    BooleanTable,
    ConcavityReport,
    RelaxedFunction,
    Structure,
    check_entrywise_affine,
    check_entrywise_concave,
    multilinear_eval,
    prop1_construct,
)
from .graph import GraphInstance, LabeledSample, SoftAssignment, load_instance, save_instance
from .objectives import PenalizedLoss, assemble_penalized, beta_bound
from .pipeline import ProblemSpec, build_problem, solve
from .solver import OptimizeConfig, SolveResult, optimize_relaxed, sequential_round, verify_guarantee

__all__ = [
    "BooleanTable",
    "ConcavityReport",
    "GraphInstance",
    "LabeledSample",
    "OptimizeConfig",
    "PenalizedLoss",
    "ProblemSpec",
    "RelaxedFunction",
    "SoftAssignment",
    "SolveResult",
    "Structure",
    "assemble_penalized",
    "beta_bound",
    "build_problem",
    "check_entrywise_affine",
    "check_entrywise_concave",
    "load_instance",
    "multilinear_eval",
    "optimize_relaxed",
    "prop1_construct",
    "save_instance",
    "sequential_round",
    "solve",
    "verify_guarantee",
]
