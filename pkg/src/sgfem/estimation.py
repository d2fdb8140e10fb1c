"""
Spatial and parametric error estimation for SGFEM approximations.

Both parts are measured in the energy norm of the parameter-free form B_0.
The spatial part reuses the deterministic estimators with one residual
column per index; the parametric part solves one K_0 problem per
neighboring index nu, F(v P_nu) - B(u, v P_nu) on the right.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..basis import lagrange_values, lattice_nodes, physical_gradients, to_cartesian
from ..errors import EstimatorError
from ..estimation import (
    ErrorIndicators,
    HierarchicalSystem,
    ResidualData,
    bubble_space,
    solve_local_problems,
    two_level_edge_indicators,
)
from .assembly import (
    SgfemSolution,
    StochasticProblem,
    assemble_sgfem,
    build_G,
    build_G_cross,
    solve_sgfem,
)
from .indices import MultiIndexSet, neighborhood

logger = logging.getLogger(__name__)

SPATIAL_STRATEGIES = ("ees1", "ees3")


@dataclass(frozen=True)
class SgfemEstimate:
    """
    spatial: indicators on edges (ees3) or elements (ees1)
    parametric: ||e_P^(nu)||_0 for every nu in the neighborhood, in its order
    """

    spatial: ErrorIndicators
    parametric: np.ndarray
    neighborhood: MultiIndexSet

    @property
    def spatial_total(self) -> float:
        return self.spatial.total

    @property
    def parametric_total(self) -> float:
        return float(np.sqrt(np.sum(self.parametric**2)))

    @property
    def total(self) -> float:
        return float(np.sqrt(self.spatial_total**2 + self.parametric_total**2))


def _require_p1(solution: SgfemSolution):
    if solution.space.order != 1:
        raise EstimatorError("stochastic error estimation is only available for P1 approximations")


def sgfem_residual(solution: SgfemSolution, problem: StochasticProblem) -> ResidualData:
    """Residual ingredients with one column per index of the Galerkin set."""
    _require_p1(solution)
    mesh = solution.mesh
    index_set = solution.index_set
    active = index_set.active_parameters
    coeff = problem.coefficient
    zero = index_set.position(index_set[0])
    couplings = [build_G(index_set, problem.measure, m).toarray() for m in range(1, active + 1)]
    local_values = solution.values[solution.space.dof_of_triangle]  # (Nt, 3, P)
    _, grads = mesh.geometry

    def source(bary):
        points = to_cartesian(mesh.vertices, mesh.triangles, bary)
        values = np.zeros(points.shape[:2] + (index_set.size,))
        f = np.asarray(problem.source(points.reshape(-1, 2)), dtype=float)
        values[:, :, zero] = np.broadcast_to(f, (points.shape[0] * points.shape[1],)).reshape(points.shape[:2])
        return values

    def flux(bary):
        points = to_cartesian(mesh.vertices, mesh.triangles, bary)
        _, dlam = lagrange_values(1, lattice_nodes(1), bary)
        phys = physical_gradients(dlam, grads)  # (Nt, Q, 3, 2)
        gradients = np.einsum("tqid,tip->tqpd", phys, local_values)
        total = coeff.a0(points)[:, :, None, None] * gradients
        for m, g in enumerate(couplings, start=1):
            coupled = np.einsum("sp,tqpd->tqsd", g, gradients)
            total += coeff.a_m(m, points)[:, :, None, None] * coupled
        return total

    return ResidualData(mesh, index_set.size, source, flux)


def estimate_spatial(
    solution: SgfemSolution,
    problem: StochasticProblem,
    strategy: str = "ees3",
    subdivision: Optional[str] = None,
) -> ErrorIndicators:
    """
    Spatial error indicators.

    ees1: element residual problems in the linear bubble space tensorized
          with the index set; one 3x3 factorization per element serves all
          columns. ees3: two-level edge indicators with an (N_D, N_P)
          residual, scaled by the a_0 detail diagonal.
    """
    _require_p1(solution)
    mesh = solution.mesh
    mean = problem.coefficient.mean_coefficient()
    if strategy == "ees1":
        data = sgfem_residual(solution, problem)
        matrices, errors = solve_local_problems(data, bubble_space("linear", subdivision or "bisec3"), mean)
        squared = np.einsum("tip,tij,tjp->t", errors, matrices, errors)
        values = np.sqrt(np.maximum(squared, 0.0))
        return ErrorIndicators("elements", values, float(np.sqrt(np.sum(values**2))))
    if strategy != "ees3":
        raise EstimatorError(f"unknown stochastic spatial estimator '{strategy}'")

    index_set = solution.index_set
    system = HierarchicalSystem(mesh, mean, subdivision or "red")
    residual = np.zeros((system.size, index_set.size))
    residual[:, index_set.position(index_set[0])] = system.load(problem.source)
    residual -= system.coupling() @ solution.values
    for m in range(1, index_set.active_parameters + 1):
        g = build_G(index_set, problem.measure, m)
        coupled = system.coupling(problem.coefficient.term_coefficient(m)) @ solution.values
        residual -= (g @ coupled.T).T
    values = two_level_edge_indicators(system, residual)
    return ErrorIndicators("edges", values, float(np.sqrt(np.sum(values**2))))


def estimate_parametric(
    solution: SgfemSolution,
    problem: StochasticProblem,
    candidates: MultiIndexSet,
) -> np.ndarray:
    """
    ||e_P^(nu)||_0 for every nu in `candidates`.

    K_0 e = -sum_m K_m U G_m(nu, .)^T on the free dofs, one factorization
    shared by all nu.

    Raises:
        EstimatorError: if a candidate already belongs to the Galerkin set
    """
    index_set = solution.index_set
    if any(nu in index_set for nu in candidates):
        raise EstimatorError("candidate indices must not belong to the Galerkin index set")
    if candidates.size == 0:
        return np.zeros(0)
    top = max(candidates.active_parameters, index_set.active_parameters)
    problem.coefficient.check_coercive(top)
    cache = solution.system.stiffness
    free = solution.space.free
    rhs = np.zeros((len(free), candidates.size))
    for m in range(1, top + 1):
        g = build_G_cross(candidates, index_set, problem.measure, m)
        if g.nnz == 0:
            continue
        rhs -= (g @ (cache.free(m) @ solution.values[free]).T).T
    errors = cache.factor.solve(rhs)
    squared = np.sum(errors * rhs, axis=0)
    return np.sqrt(np.maximum(squared, 0.0))


def estimate_sgfem(
    solution: SgfemSolution,
    problem: StochasticProblem,
    extra: int = 1,
    spatial: str = "ees3",
) -> SgfemEstimate:
    """Both error components; eta^2 = ||e_X||^2 + ||e_P||^2."""
    candidates = neighborhood(solution.index_set, extra)
    spatial_indicators = estimate_spatial(solution, problem, spatial)
    parametric = estimate_parametric(solution, problem, candidates)
    estimate = SgfemEstimate(spatial_indicators, parametric, candidates)
    logger.debug(
        f"SGFEM estimate: spatial {estimate.spatial_total:.4e}, parametric {estimate.parametric_total:.4e} "
        f"over {candidates.size} candidate indices"
    )
    return estimate


def reference_energy_error(
    solution: SgfemSolution,
    problem: StochasticProblem,
    extra: int = 1,
    order: int = 2,
) -> float:
    """
    Energy error against a higher-fidelity surrogate.

    The surrogate is the P2 (by default) Galerkin solution on the same mesh
    with the enriched index set P + neighborhood(P); the coarse solution is
    interpolated into that space and the difference measured in the norm of
    the surrogate operator.
    """
    _require_p1(solution)
    enriched = solution.index_set.union(neighborhood(solution.index_set, extra))
    reference = solve_sgfem(assemble_sgfem(solution.mesh, problem, enriched, order=order))
    coarse = solution.values
    if order == 2:
        edges = solution.mesh.edge_table.edges
        coarse = np.vstack([coarse, coarse[edges].mean(axis=1)])
    embedded = np.zeros_like(reference.values)
    for j, nu in enumerate(solution.index_set):
        embedded[:, enriched.position(nu)] = coarse[:, j]
    free = reference.space.free
    difference = (reference.values - embedded)[free].T.reshape(-1)
    operator = reference.system.operator
    try:
        energy = float(difference @ operator.matvec(difference))
    finally:
        operator.close()
    return float(np.sqrt(max(energy, 0.0)))
