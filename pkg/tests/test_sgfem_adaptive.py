"""
Tests for the adaptive SGFEM driver.
"""

import numpy as np
import pytest

from src.errors import ConfigError
from src.estimation import ErrorIndicators
from src.mesh import DomainKind, generate_structured
from src.sgfem.adaptive import SgfemReport, adaptive_sgfem, choose_refinement
from src.sgfem.assembly import StochasticProblem
from src.sgfem.coefficients import ParametricCoefficient
from src.sgfem.estimation import SgfemEstimate
from src.sgfem.indices import ZERO, MultiIndex, MultiIndexSet


def ones(points):
    return np.ones(len(points))


@pytest.fixture
def problem():
    return StochasticProblem(DomainKind.square(), ParametricCoefficient("ce2"), ones)


def make_estimate(spatial_values, parametric_values):
    spatial_values = np.asarray(spatial_values, dtype=float)
    spatial = ErrorIndicators("edges", spatial_values, float(np.sqrt(np.sum(spatial_values**2))))
    candidates = MultiIndexSet(
        [MultiIndex.unit(m) for m in range(2, 2 + len(parametric_values))], require_zero=False
    )
    return SgfemEstimate(spatial, np.asarray(parametric_values, dtype=float), candidates)


class TestChooseRefinement:
    """Tests for the spatial/parametric decision."""

    def test_version1_dominant_estimate(self):
        """Version 1 refines the component with the larger estimate."""
        estimate = make_estimate([0.3, 0.4], [0.6, 0.0])
        assert choose_refinement(estimate, np.array([1]), np.array([0]), 1) == "parametric"
        estimate = make_estimate([0.3, 0.7], [0.6, 0.0])
        assert choose_refinement(estimate, np.array([1]), np.array([0]), 1) == "spatial"

    def test_version2_marked_reduction(self):
        """Version 2 compares the squared indicators of the marked sets."""
        estimate = make_estimate([0.5, 0.5, 0.5], [0.6, 0.1])
        # spatial 0.25 vs parametric 0.36
        assert choose_refinement(estimate, np.array([0]), np.array([0]), 2) == "parametric"
        # spatial 0.75 vs parametric 0.36
        assert choose_refinement(estimate, np.array([0, 1, 2]), np.array([0]), 2) == "spatial"

    @pytest.mark.parametrize("version", [1, 2])
    def test_ties_go_to_spatial(self, version):
        """Equal estimates refine the mesh."""
        estimate = make_estimate([0.6], [0.6])
        assert choose_refinement(estimate, np.array([0]), np.array([0]), version) == "spatial"

    @pytest.mark.parametrize("version", [1, 2])
    def test_empty_parametric_marking(self, version):
        """Nothing to add to the index set means spatial refinement."""
        estimate = make_estimate([0.1], [0.9])
        marked = np.zeros(0, dtype=np.int64)
        assert choose_refinement(estimate, np.array([0]), marked, version) == "spatial"


class TestAdaptiveSgfem:
    """Tests for the adaptive loop."""

    def test_short_run(self, problem):
        """Each iteration refines exactly one component."""
        mesh = generate_structured(DomainKind.square(), 1)
        solution, report = adaptive_sgfem(problem, tol=1e-12, max_iter=3, mesh=mesh)
        assert report.status == "max_iter"
        assert len(report.records) == 4
        assert np.all(np.diff(report.column("dofs")) > 0)
        for before, after in zip(report.records[:-1], report.records[1:]):
            assert before.refinement in ("spatial", "parametric")
            if before.refinement == "spatial":
                assert after.n_x > before.n_x and after.n_p == before.n_p
            else:
                assert after.n_p > before.n_p and after.n_x == before.n_x
        assert report.final.refinement == ""
        assert report.final.dofs == solution.dofs
        assert report.index_history[0] == (0, [ZERO, MultiIndex.unit(1)])
        assert len(report.minres_histories) == 4

    def test_converged(self, problem):
        """A loose tolerance stops after the first solve."""
        solution, report = adaptive_sgfem(problem, tol=10.0)
        assert report.status == "converged"
        assert report.iterations == 0
        assert solution.index_set == MultiIndexSet.initial()
        assert np.isclose(report.final.eta**2, report.final.e_x**2 + report.final.e_p**2)

    def test_element_estimator(self, problem):
        """ees1 marks elements and still refines the mesh."""
        _, report = adaptive_sgfem(problem, tol=1e-12, max_iter=2, spatial="ees1", version=1)
        assert len(report.records) == 3
        assert all(record.marked > 0 for record in report.records[:-1])

    @pytest.mark.parametrize(
        "kwargs,key",
        [
            ({"tol": 0.0}, "tol"),
            ({"version": 3}, "version"),
            ({"spatial": "ees2"}, "estimator"),
            ({"marking": "bulk"}, "marking"),
            ({"theta_x": 0.0}, "theta_x"),
            ({"theta_p": 1.5}, "theta_p"),
        ],
    )
    def test_invalid_settings(self, problem, kwargs, key):
        """Invalid settings raise ConfigError naming the key."""
        with pytest.raises(ConfigError) as excinfo:
            adaptive_sgfem(problem, **kwargs)
        assert excinfo.value.key == key


class TestReportOutput:
    """Tests for the index log and MINRES table."""

    def test_index_lines(self):
        """The iteration label appears on the first index of each batch."""
        report = SgfemReport()
        report.index_history.append((0, [ZERO, MultiIndex.unit(1)]))
        assert report.index_lines() == ["   0  (0)", "      (1)"]
        report.index_history.append((3, [MultiIndex.unit(2)]))
        assert report.index_lines()[-1] == "   3  (0 1)"

    def test_write_files(self, problem, tmp_path):
        """index_set.txt and minres_iters.csv have one entry per record."""
        _, report = adaptive_sgfem(problem, tol=1e-12, max_iter=1)
        report.write_index_log(tmp_path / "index_set.txt")
        report.write_minres_csv(tmp_path / "minres_iters.csv")
        lines = (tmp_path / "minres_iters.csv").read_text().splitlines()
        assert lines[0] == "iteration,minres_iters,relative_residual"
        assert len(lines) == 3
        assert lines[1].startswith("0,")
        assert (tmp_path / "index_set.txt").read_text().startswith("   0  (")
