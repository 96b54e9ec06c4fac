"""Numerical toolkit for the random degree constrained process (RDCP).

Computes the giant-component critical time through the principal eigenvalue
of the saturation-time integral operator, validates the almost-2-regular
perturbation expansion on grids, and cross-checks both against direct Monte
Carlo simulation of the process on the complete graph.
"""

from . import errors
from .distributions import (
    DegreeDistribution,
    EpsilonDirection,
    TailVector,
    asymptotic_tc_disc,
    asymptotic_tc_hat,
    from_epsilon_direction,
    from_json,
    from_shorthand,
    heuristic_percolation_threshold,
    make_direction,
    molloy_reed_constant,
    pure_degree,
    tails,
    to_epsilon_direction,
    two_regular,
    validate,
)
from .lambda_solver import HazardModel, LambdaTable, build_lambda_table, psi

__version__ = "0.1.0"

__all__ = [
    "DegreeDistribution",
    "EpsilonDirection",
    "HazardModel",
    "LambdaTable",
    "TailVector",
    "asymptotic_tc_disc",
    "asymptotic_tc_hat",
    "build_lambda_table",
    "errors",
    "from_epsilon_direction",
    "from_json",
    "from_shorthand",
    "heuristic_percolation_threshold",
    "make_direction",
    "molloy_reed_constant",
    "psi",
    "pure_degree",
    "tails",
    "to_epsilon_direction",
    "two_regular",
    "validate",
]
