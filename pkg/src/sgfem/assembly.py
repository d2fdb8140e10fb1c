"""
Tensor-product Galerkin system A = sum_m G_m (x) K_m and its MINRES solve.

Block t of the solution vector holds the spatial coefficients paired with
the t-th index of the index set. Only the zero index sees the load, since
<1, P_nu> vanishes for every other index.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from ..errors import IndexSetError
from ..fem import (
    DeterministicProblem,
    FeSpace,
    FieldSolution,
    ScalarField,
    assemble_load,
    assemble_stiffness,
    build_space,
)
from ..mesh import DomainKind, Mesh
from ..sparse_linalg import (
    MINRES_MAXIT,
    MINRES_TOL,
    KroneckerSumOperator,
    MeanPreconditioner,
    SpdFactor,
    minres,
)
from .coefficients import ParametricCoefficient
from .indices import MultiIndexSet
from .measures import MeasureFamily

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StochasticProblem:
    """-div(a(x, y) grad u) = f in D, u = 0 on the boundary, for all parameters y."""

    domain: DomainKind
    coefficient: ParametricCoefficient
    source: ScalarField

    @property
    def measure(self) -> MeasureFamily:
        return self.coefficient.measure

    def mean_problem(self) -> DeterministicProblem:
        """The parameter-free problem with diffusion a_0."""
        return DeterministicProblem(self.domain, self.coefficient.mean_coefficient(), self.source)


def build_G_cross(rows: MultiIndexSet, cols: MultiIndexSet, measure: MeasureFamily, m: int) -> sp.csr_matrix:
    """
    Coupling <y_m P_col, P_row> between two index sets.

    Nonzero only where the indices differ by one in coordinate m; the
    entry is beta_n with n the larger of the two m-th entries.
    """
    if m < 1:
        raise IndexSetError(f"parameter positions start at 1, got {m}")
    top = max(rows.max_value(m), cols.max_value(m)) + 1
    beta = measure.recurrence(top)
    r, c, v = [], [], []
    for j, mu in enumerate(cols):
        for step in (1, -1):
            nu = mu.shifted(m, step)
            if nu is not None and nu in rows:
                r.append(rows.position(nu))
                c.append(j)
                v.append(beta[max(mu[m], nu[m]) - 1])
    return sp.csr_matrix((v, (r, c)), shape=(rows.size, cols.size))


def build_G(index_set: MultiIndexSet, measure: MeasureFamily, m: int) -> sp.csr_matrix:
    """[G_m]_{tj} = <y_m P_j, P_t>; G_0 is the identity."""
    if m == 0:
        return sp.identity(index_set.size, format="csr")
    return build_G_cross(index_set, index_set, measure, m)


class StiffnessCache:
    """
    Stiffness matrices K_m of a_m on one space, assembled on first use.

    K_0 belongs to a_0 and is SPD on the free dofs; K_m (m >= 1) may be
    indefinite.
    """

    def __init__(self, space: FeSpace, coefficient: ParametricCoefficient):
        self.space = space
        self.coefficient = coefficient
        self._matrices: Dict[int, sp.csr_matrix] = {}
        self._factor: Optional[SpdFactor] = None

    def full(self, m: int) -> sp.csr_matrix:
        if m not in self._matrices:
            coeff = self.coefficient.mean_coefficient() if m == 0 else self.coefficient.term_coefficient(m)
            self._matrices[m] = assemble_stiffness(self.space.mesh, self.space, coeff)
        return self._matrices[m]

    def free(self, m: int) -> sp.csr_matrix:
        free = self.space.free
        return self.full(m)[free][:, free].tocsr()

    @property
    def factor(self) -> SpdFactor:
        """Sparse factorization of K_0 on the free dofs."""
        if self._factor is None:
            self._factor = SpdFactor(self.free(0))
        return self._factor


@dataclass(eq=False)
class SgfemSystem:
    problem: StochasticProblem
    space: FeSpace
    index_set: MultiIndexSet
    stiffness: StiffnessCache
    operator: KroneckerSumOperator
    rhs: np.ndarray
    load: np.ndarray

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh


def assemble_sgfem(
    mesh: Mesh,
    problem: StochasticProblem,
    index_set: MultiIndexSet,
    order: int = 1,
    stiffness: Optional[StiffnessCache] = None,
) -> SgfemSystem:
    """
    Matrix-free Galerkin operator on the free dofs and its right-hand side.

    Args:
        mesh: spatial mesh
        problem: parametric problem; the measure travels with the coefficient
        index_set: Galerkin index set (contains the zero index)
        order: 1 or 2
        stiffness: cache of K_m on the same space to reuse

    Raises:
        CoercivityError: if tau >= 1 over the active terms
    """
    active = index_set.active_parameters
    problem.coefficient.check_coercive(active)
    space = stiffness.space if stiffness is not None else build_space(mesh, order)
    cache = stiffness or StiffnessCache(space, problem.coefficient)
    terms = [(build_G(index_set, problem.measure, m), cache.free(m)) for m in range(active + 1)]
    operator = KroneckerSumOperator(terms)
    load = assemble_load(mesh, space, problem.source)
    rhs = np.zeros((index_set.size, space.num_free))
    rhs[index_set.position(index_set[0])] = load[space.free]
    logger.debug(
        f"Assembled SGFEM system: {space.num_free} spatial x {index_set.size} parametric dofs, "
        f"{active} active parameters"
    )
    return SgfemSystem(problem, space, index_set, cache, operator, rhs.reshape(-1), load)


@dataclass(eq=False)
class SgfemSolution:
    """
    Coefficients u_ij of the Galerkin solution.

    values has shape (N_X, N_P) over all dofs (Dirichlet rows are zero);
    column j pairs with the j-th index of the index set.
    """

    system: SgfemSystem
    values: np.ndarray
    iterations: int = 0
    converged: bool = True
    residual_history: List[float] = field(default_factory=list)

    @property
    def space(self) -> FeSpace:
        return self.system.space

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh

    @property
    def index_set(self) -> MultiIndexSet:
        return self.system.index_set

    @property
    def measure(self) -> MeasureFamily:
        return self.system.problem.measure

    @property
    def dofs(self) -> int:
        return self.space.num_free * self.index_set.size

    def mean(self) -> np.ndarray:
        return self.values[:, 0].copy()

    def variance(self) -> np.ndarray:
        """Pointwise variance at the dofs: sum over nonzero indices of the squared coefficients."""
        return np.sum(self.values[:, 1:] ** 2, axis=1)

    def column_field(self, j: int) -> FieldSolution:
        cache = self.system.stiffness
        return FieldSolution(
            self.space,
            self.values[:, j].copy(),
            cache.full(0),
            self.system.load if j == 0 else np.zeros(self.space.num_dofs),
            cache.factor,
            self.system.problem.coefficient.mean_coefficient(),
        )

    def mean_field(self) -> FieldSolution:
        return self.column_field(0)


def solve_sgfem(system: SgfemSystem, tol: float = MINRES_TOL, maxit: int = MINRES_MAXIT) -> SgfemSolution:
    """
    Preconditioned MINRES with the mean-based preconditioner I (x) K_0.

    Reaching maxit is reported through converged=False with a warning.
    """
    n_p, n_x = system.index_set.size, system.space.num_free
    precond = MeanPreconditioner(system.stiffness.free(0), n_p, system.stiffness.factor)
    try:
        result = minres(system.operator, system.rhs, precond, tol=tol, maxit=maxit)
    finally:
        system.operator.close()
    values = np.zeros((system.space.num_dofs, n_p))
    values[system.space.free] = result.x.reshape(n_p, n_x).T
    residual = result.residual_history[-1] / result.residual_history[0] if result.residual_history[0] else 0.0
    logger.info(f"MINRES: {result.iterations} iterations, relative residual {residual:.2e}")
    return SgfemSolution(system, values, result.iterations, result.converged, result.residual_history)
