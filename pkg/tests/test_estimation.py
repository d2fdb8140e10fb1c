"""
Tests for the ees1/ees2/ees3 error estimators.
"""

import numpy as np
import pytest

from src.errors import EstimatorError
from src.estimation import (
    ErrorIndicators,
    bubble_space,
    effectivity_indices,
    estimate_ees1,
    estimate_ees2,
    estimate_ees3,
)
from src.fem import Coefficient, DeterministicProblem, energy_error, solve_deterministic
from src.basis import LOCAL_EDGES
from src.mesh import DIRICHLET, NEUMANN, DomainKind, generate_structured, uniform_refine


def ones(points):
    return np.ones(len(points))


def zeros(points):
    return np.zeros(len(points))


def quadratic_bubble_oracle(mesh, solution):
    """Element-by-element dense solve of the quadratic edge bubble problems for f = 1, a = I."""
    areas, grads = mesh.geometry
    centre = np.full((1, 3), 1.0 / 3.0)
    grad_u = solution.gradients(centre)[:, 0]
    table = mesh.edge_table
    markers = mesh.edge_markers[table.edge_of_triangle]
    corners = mesh.vertices[mesh.triangles]
    values = np.zeros(mesh.num_triangles)
    for t in range(mesh.num_triangles):
        mass = areas[t] * (np.ones((3, 3)) + np.eye(3)) / 12.0
        stiffness = np.zeros((3, 3))
        rhs = np.zeros(3)
        for a, (i, j) in enumerate(LOCAL_EDGES):
            for b, (p, q) in enumerate(LOCAL_EDGES):
                stiffness[a, b] = 16.0 * (
                    mass[j, q] * grads[t, i] @ grads[t, p]
                    + mass[j, p] * grads[t, i] @ grads[t, q]
                    + mass[i, q] * grads[t, j] @ grads[t, p]
                    + mass[i, p] * grads[t, j] @ grads[t, q]
                )
            rhs[a] = areas[t] / 3.0 - 4.0 * areas[t] / 3.0 * (grads[t, i] + grads[t, j]) @ grad_u[t]
            owners = table.triangles_of_edge[table.edge_of_triangle[t, a]]
            if markers[t, a] == 0:
                other = owners[0] if owners[1] == t else owners[1]
                tangent = corners[t, j] - corners[t, i]
                normal = np.array([tangent[1], -tangent[0]])
                rhs[a] += 2.0 / 3.0 * 0.5 * (grad_u[t] + grad_u[other]) @ normal
        keep = markers[t] != DIRICHLET
        if keep.any():
            local = np.linalg.solve(stiffness[np.ix_(keep, keep)], rhs[keep])
            values[t] = np.sqrt(local @ rhs[keep])
    return values


@pytest.fixture
def mesh():
    return generate_structured(DomainKind.square(), 1)


@pytest.fixture
def poisson():
    return DeterministicProblem(DomainKind.square(), Coefficient.constant(1.0), ones)


@pytest.fixture
def linear_problem():
    return DeterministicProblem(
        DomainKind.square(), Coefficient.constant(1.0), zeros, lambda p: 1.0 + p[:, 0] - 2.0 * p[:, 1]
    )


class TestExactSolutions:
    """Estimators vanish when P1 is exact."""

    def test_ees1_linear(self, mesh, linear_problem):
        """Element residual problems vanish for an exact solution."""
        solution = solve_deterministic(linear_problem, mesh, 1)
        estimate = estimate_ees1(mesh, solution.space, solution, linear_problem)
        assert estimate.total < 1e-12

    @pytest.mark.parametrize("estimator", [estimate_ees2, estimate_ees3])
    def test_hierarchical_linear(self, mesh, linear_problem, estimator):
        """Detail residuals vanish for an exact solution."""
        solution = solve_deterministic(linear_problem, mesh, 1)
        assert estimator(mesh, solution.space, solution, linear_problem).total < 1e-12

    def test_neumann_data_enter_the_residual(self, mesh):
        """An exact solution with Neumann data still gives a zero estimate."""
        marked = mesh.with_markers(lambda mid: np.isclose(mid[:, 0], 1.0), NEUMANN)
        problem = DeterministicProblem(
            DomainKind.square(), Coefficient.constant(1.0), zeros, lambda p: p[:, 0], ones
        )
        solution = solve_deterministic(problem, marked, 1)
        assert estimate_ees2(marked, solution.space, solution, problem).total < 1e-12
        assert estimate_ees1(marked, solution.space, solution, problem).total < 1e-12


class TestIndicators:
    """Tests for local indicator layouts."""

    def test_ees1_shapes(self, mesh, poisson):
        """One nonnegative indicator per element."""
        solution = solve_deterministic(poisson, mesh, 1)
        estimate = estimate_ees1(mesh, solution.space, solution, poisson, "linear", "red")
        assert estimate.carrier == "elements"
        assert estimate.values.shape == (mesh.num_triangles,)
        assert np.isclose(estimate.total, np.sqrt(np.sum(estimate.squared)))
        assert estimate.total > 0.0

    def test_ees1_quartic_on_p2(self, mesh, poisson):
        """Quartic bubbles estimate P2 solutions."""
        solution = solve_deterministic(poisson, mesh, 2)
        estimate = estimate_ees1(mesh, solution.space, solution, poisson, "quartic")
        assert estimate.total >= 0.0
        with pytest.raises(EstimatorError):
            estimate_ees1(mesh, solution.space, solution, poisson, "linear")

    def test_ees2_element_split_is_exact(self, mesh, poisson):
        """Element localization splits the detail energy exactly."""
        solution = solve_deterministic(poisson, mesh, 1)
        estimate = estimate_ees2(mesh, solution.space, solution, poisson, "elements")
        assert np.isclose(np.sum(estimate.squared), estimate.total**2, rtol=1e-10)

    def test_ees2_edges_zero_on_dirichlet(self, mesh, poisson):
        """Edge indicators vanish on Dirichlet edges."""
        solution = solve_deterministic(poisson, mesh, 1)
        estimate = estimate_ees2(mesh, solution.space, solution, poisson, "edges")
        boundary = ~mesh.edge_table.interior
        assert estimate.values.shape == (mesh.edge_table.count,)
        assert np.all(estimate.values[boundary] == 0.0)

    def test_ees3_total_independent_of_carrier(self, mesh, poisson):
        """ees3 reports the edge total on both carriers."""
        solution = solve_deterministic(poisson, mesh, 1)
        edges = estimate_ees3(mesh, solution.space, solution, poisson, "edges")
        elements = estimate_ees3(mesh, solution.space, solution, poisson, "elements")
        assert np.isclose(edges.total, elements.total)
        assert elements.values.shape == (mesh.num_triangles,)

    def test_ees3_rejects_p2(self, mesh, poisson):
        """Two-level indicators need P1."""
        solution = solve_deterministic(poisson, mesh, 2)
        with pytest.raises(EstimatorError):
            estimate_ees3(mesh, solution.space, solution, poisson)

    def test_ees1_quadratic_matches_dense_solve(self, poisson):
        """Quadratic bubble indicators agree with a closed-form local solve."""
        mesh = generate_structured(DomainKind.square(), 2)
        solution = solve_deterministic(poisson, mesh, 1)
        estimate = estimate_ees1(mesh, solution.space, solution, poisson, "quadratic")
        assert np.allclose(estimate.values, quadratic_bubble_oracle(mesh, solution), rtol=1e-10, atol=1e-14)

    @pytest.mark.parametrize("scale", [-3.0, 0.5])
    @pytest.mark.parametrize("estimator", [estimate_ees1, estimate_ees2, estimate_ees3])
    def test_indicators_scale_with_data(self, mesh, estimator, scale):
        """Scaling f and the Dirichlet datum scales every indicator by |c|."""

        def problem_for(c):
            return DeterministicProblem(
                DomainKind.square(),
                Coefficient.constant(1.0),
                lambda p: c * np.ones(len(p)),
                lambda p: c * p[:, 0] * p[:, 1],
            )

        base_problem, scaled_problem = problem_for(1.0), problem_for(scale)
        base = solve_deterministic(base_problem, mesh, 1)
        scaled = solve_deterministic(scaled_problem, mesh, 1)
        expected = abs(scale) * estimator(mesh, base.space, base, base_problem).values
        computed = estimator(mesh, scaled.space, scaled, scaled_problem).values
        assert np.allclose(computed, expected, rtol=1e-9, atol=1e-14)

    @pytest.mark.parametrize("estimator", [estimate_ees1, estimate_ees2, estimate_ees3])
    def test_reruns_are_bit_identical(self, mesh, poisson, estimator):
        """Repeating an estimate reproduces every indicator exactly."""
        first = solve_deterministic(poisson, mesh, 1)
        second = solve_deterministic(poisson, mesh, 1)
        assert np.array_equal(
            estimator(mesh, first.space, first, poisson).values,
            estimator(mesh, second.space, second, poisson).values,
        )


class TestReliability:
    """Estimates track the true error."""

    def test_estimates_decrease_under_refinement(self, mesh, poisson):
        """Uniform refinement reduces the ees2 estimate."""
        coarse = solve_deterministic(poisson, mesh, 1)
        fine_mesh = uniform_refine(mesh)
        fine = solve_deterministic(poisson, fine_mesh, 1)
        eta_coarse = estimate_ees2(mesh, coarse.space, coarse, poisson).total
        eta_fine = estimate_ees2(fine_mesh, fine.space, fine, poisson).total
        assert eta_fine < eta_coarse

    @pytest.mark.parametrize("estimator", [estimate_ees1, estimate_ees2, estimate_ees3])
    def test_effectivity_in_range(self, mesh, poisson, estimator):
        """Effectivity against a twice refined reference stays moderate."""
        solution = solve_deterministic(poisson, mesh, 1)
        reference_mesh = uniform_refine(uniform_refine(mesh))
        reference = solve_deterministic(poisson, reference_mesh, 1)
        error = energy_error(reference, solution)
        eta = estimator(mesh, solution.space, solution, poisson).total
        assert 0.2 < eta / error < 5.0


class TestHelpers:
    """Tests for small estimator utilities."""

    def test_negative_indicator(self):
        """Negative indicators are rejected."""
        with pytest.raises(EstimatorError):
            ErrorIndicators("edges", np.array([-1.0]), 1.0)

    def test_unknown_carrier(self):
        """Unknown carriers are rejected."""
        with pytest.raises(EstimatorError):
            ErrorIndicators("vertices", np.zeros(2), 0.0)

    def test_unknown_bubble(self):
        """Unknown bubble spaces are rejected."""
        with pytest.raises(EstimatorError):
            bubble_space("cubic")

    def test_effectivity_shapes(self):
        """Effectivity indices need matching shapes."""
        assert np.allclose(effectivity_indices([1.0, 2.0], [2.0, 2.0]), [0.5, 1.0])
        with pytest.raises(EstimatorError):
            effectivity_indices([1.0], [1.0, 2.0])
