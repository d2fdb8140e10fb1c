"""
Stochastic Galerkin FEM for parametric diffusion problems

Affine coefficient expansions, orthonormal polynomial chaos, matrix-free
Kronecker-structured Galerkin systems and the adaptive driver that
refines either the mesh or the index set.
"""

from .adaptive import SgfemReport, adaptive_sgfem
from .assembly import SgfemSolution, StochasticProblem, assemble_sgfem, solve_sgfem
from .coefficients import ParametricCoefficient
from .estimation import SgfemEstimate, estimate_sgfem
from .indices import MultiIndex, MultiIndexSet, neighborhood
from .measures import MeasureFamily

__all__ = [
    "MeasureFamily",
    "MultiIndex",
    "MultiIndexSet",
    "ParametricCoefficient",
    "SgfemEstimate",
    "SgfemReport",
    "SgfemSolution",
    "StochasticProblem",
    "adaptive_sgfem",
    "assemble_sgfem",
    "estimate_sgfem",
    "neighborhood",
    "solve_sgfem",
]
