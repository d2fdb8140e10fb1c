"""
Exception hierarchy shared by every module.

Library code raises these; only the command-line layer turns them into
exit codes.
"""

from typing import Optional


class TifissError(Exception):
    """Base class for all toolkit errors."""


# Mesh


class MeshError(TifissError, ValueError):
    """A mesh invariant is violated."""


class InvalidEdgeError(MeshError):
    """A marked edge id does not exist in the edge table."""


class DegenerateElementError(MeshError):
    """A triangle has (numerically) zero area."""


class PointLocationError(MeshError):
    """A point lies outside the triangulation."""


class NonNestedMeshError(MeshError):
    """Two meshes are not related by refinement."""


class UnsupportedDomainError(MeshError):
    """The requested domain tag has no structured generator."""


# Linear algebra


class SolverError(TifissError, ArithmeticError):
    """A linear solve failed."""


class NotPositiveDefiniteError(SolverError):
    """A non-positive pivot appeared during a symmetric factorization."""

    def __init__(self, pivot: int, value: float):
        super().__init__(f"non-positive pivot {value:.3e} at index {pivot}")
        self.pivot = pivot
        self.value = value


class MinresBreakdownError(SolverError):
    """The Lanczos process produced a zero denominator."""


class DimensionMismatchError(SolverError, ValueError):
    """Operand sizes do not agree."""


# Assembly


class AssemblyError(TifissError, ValueError):
    """Finite element data cannot be assembled."""


class NonFiniteDataError(AssemblyError):
    """A data function returned inf/nan at a quadrature point."""


class CoercivityError(AssemblyError):
    """A diffusion coefficient is not uniformly positive."""


# Estimation, marking, parametric data


class EstimatorError(TifissError, ValueError):
    """An error estimator cannot be applied to the given data."""


class MarkingError(TifissError, ValueError):
    """Marking parameters or indicators are invalid."""


class RecurrenceError(TifissError, ArithmeticError):
    """The discretized Stieltjes procedure lost positivity or orthonormality."""


class ExpansionError(TifissError, ArithmeticError):
    """A covariance eigenpair could not be bracketed."""


class IndexSetError(TifissError, ValueError):
    """A multi-index or multi-index set violates its invariants."""


class ConfigError(TifissError, ValueError):
    """A run configuration is malformed."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class RunError(TifissError):
    """A numerical failure during one stage of a configured run."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
