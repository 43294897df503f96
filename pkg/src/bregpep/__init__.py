"""Performance estimation and certificates for Bregman first-order methods."""

from .model import (
    STAR,
    DiscretePoint,
    DiscreteRepresentation,
    IndexSet,
    PepMatrices,
    ProblemParams,
    bregman_distance,
    gram_from_representation,
    representation_from_gram,
)
from .pep import (
    PepProgram,
    PepSolution,
    build_iga_hsmooth_pep,
    build_iga_pep,
    build_nolips_pep,
    build_orthogonal_pep,
    build_residual_pep,
    extract_dual,
    low_rank_refine,
    solve_pep,
)
from .sdp import ConicProgram, SolverSettings, solve, verify_solution

__all__ = [
    "STAR", "DiscretePoint", "DiscreteRepresentation", "IndexSet", "PepMatrices", "ProblemParams",
    "bregman_distance", "gram_from_representation", "representation_from_gram",
    "PepProgram", "PepSolution", "build_iga_hsmooth_pep", "build_iga_pep", "build_nolips_pep",
    "build_orthogonal_pep", "build_residual_pep", "extract_dual", "low_rank_refine", "solve_pep",
    "ConicProgram", "SolverSettings", "solve", "verify_solution",
]
__version__ = "0.1.0"
