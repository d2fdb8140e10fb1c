"""
Tests for spatial and parametric SGFEM error estimation.
"""

import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from src.errors import EstimatorError
from src.estimation import estimate_ees1, estimate_ees3
from src.fem import solve_deterministic
from src.mesh import DomainKind, generate_structured
from src.sgfem.assembly import StochasticProblem, assemble_sgfem, solve_sgfem
from src.sgfem.coefficients import ParametricCoefficient
from src.sgfem.estimation import (
    estimate_parametric,
    estimate_sgfem,
    estimate_spatial,
    reference_energy_error,
)
from src.sgfem.indices import ZERO, MultiIndexSet, neighborhood


def ones(points):
    return np.ones(len(points))


@pytest.fixture
def mesh():
    return generate_structured(DomainKind.square(), 1)


@pytest.fixture
def problem():
    return StochasticProblem(DomainKind.square(), ParametricCoefficient("ce2"), ones)


def solve(mesh, problem, index_set, order=1):
    return solve_sgfem(assemble_sgfem(mesh, problem, index_set, order=order))


class TestSpatial:
    """The spatial part reduces to the deterministic estimators on {0}."""

    def test_ees3_zero_set(self, mesh, problem):
        """ees3 with one column equals the deterministic two-level estimator."""
        solution = solve(mesh, problem, MultiIndexSet([ZERO]))
        mean_problem = problem.mean_problem()
        reference = solve_deterministic(mean_problem, mesh, 1)
        expected = estimate_ees3(mesh, reference.space, reference, mean_problem)
        computed = estimate_spatial(solution, problem, "ees3")
        assert np.allclose(computed.values, expected.values, rtol=1e-6, atol=1e-12)
        assert np.isclose(computed.total, expected.total, rtol=1e-6)

    def test_ees1_zero_set(self, mesh, problem):
        """ees1 with one column equals the deterministic element estimator."""
        solution = solve(mesh, problem, MultiIndexSet([ZERO]))
        mean_problem = problem.mean_problem()
        reference = solve_deterministic(mean_problem, mesh, 1)
        expected = estimate_ees1(mesh, reference.space, reference, mean_problem)
        computed = estimate_spatial(solution, problem, "ees1")
        assert computed.carrier == "elements"
        assert np.allclose(computed.values, expected.values, rtol=1e-6, atol=1e-12)

    def test_unknown_strategy(self, mesh, problem):
        """ees2 has no stochastic counterpart."""
        solution = solve(mesh, problem, MultiIndexSet.initial())
        with pytest.raises(EstimatorError):
            estimate_spatial(solution, problem, "ees2")

    def test_p2_rejected(self, mesh, problem):
        """Stochastic estimation needs P1."""
        solution = solve(mesh, problem, MultiIndexSet.initial(), order=2)
        with pytest.raises(EstimatorError):
            estimate_spatial(solution, problem)


class TestParametric:
    """Tests for the per-index parametric indicators."""

    def test_matches_manual_solve(self, mesh, problem):
        """||e||_0^2 = r^T K_0^-1 r with r = -beta_1 K_1 u_0."""
        solution = solve(mesh, problem, MultiIndexSet([ZERO]))
        candidates = neighborhood(solution.index_set, 1)
        cache = solution.system.stiffness
        free = solution.space.free
        rhs = -cache.free(1) @ solution.values[free, 0] / np.sqrt(3.0)
        error = spsolve(cache.free(0).tocsc(), rhs)
        indicators = estimate_parametric(solution, problem, candidates)
        assert indicators.shape == (1,)
        assert np.isclose(indicators[0], np.sqrt(error @ rhs), rtol=1e-8)

    def test_candidates_in_set(self, mesh, problem):
        """Candidates from the Galerkin set are rejected."""
        solution = solve(mesh, problem, MultiIndexSet.initial())
        with pytest.raises(EstimatorError):
            estimate_parametric(solution, problem, MultiIndexSet.initial())

    def test_empty_candidates(self, mesh, problem):
        """An empty candidate set gives no indicators."""
        solution = solve(mesh, problem, MultiIndexSet.initial())
        empty = MultiIndexSet([], require_zero=False)
        assert estimate_parametric(solution, problem, empty).size == 0


class TestCombined:
    """Tests for the total estimate."""

    def test_total_identity(self, mesh, problem):
        """eta^2 is the sum of the squared components."""
        estimate = estimate_sgfem(solve(mesh, problem, MultiIndexSet.initial()), problem)
        assert np.isclose(estimate.total**2, estimate.spatial_total**2 + estimate.parametric_total**2)
        assert estimate.parametric.shape == (estimate.neighborhood.size,)
        assert estimate.spatial.carrier == "edges"

    def test_effectivity(self, mesh, problem):
        """The estimate tracks the surrogate energy error within [0.5, 1.1]."""
        solution = solve(mesh, problem, MultiIndexSet.initial())
        error = reference_energy_error(solution, problem)
        eta = estimate_sgfem(solution, problem).total
        assert np.isfinite(error) and error > 0.0
        assert 0.5 <= eta / error <= 1.1
