"""Linear fast-slow reaction networks with detailed balance.

Coarse-graining operators, limit dynamics, gradient structures and
dissipation functionals, with a command-line driver (``fastslow``).
"""
__version__ = "0.1.0"

from .coarse import CoarseGraining, Partition, coarse_generator, coarse_graining
from .dynamics import Trajectory, convergence_experiment, propagate, solve_limit
from .edp import (
    DissipationReport,
    GradientFamily,
    dissipation_functional,
    effective_dual,
    effective_primal,
    legendre_primal,
    limit_dissipation,
    recovery_sequence,
)
from .errors import FastSlowError
from .gradstruct import GradientStructure, Kind
from .network import ReactionNetwork, assemble_generator, check_assumptions, stationary_measure

__all__ = [
    "CoarseGraining", "Partition", "coarse_generator", "coarse_graining",
    "Trajectory", "convergence_experiment", "propagate", "solve_limit",
    "DissipationReport", "GradientFamily", "dissipation_functional", "effective_dual",
    "effective_primal", "legendre_primal", "limit_dissipation", "recovery_sequence",
    "FastSlowError", "GradientStructure", "Kind",
    "ReactionNetwork", "assemble_generator", "check_assumptions", "stationary_measure",
]
