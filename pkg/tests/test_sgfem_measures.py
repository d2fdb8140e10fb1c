"""
Tests for parameter measures, recurrences and Gauss rules.
"""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from src.errors import ConfigError, RecurrenceError
from src.sgfem.measures import MeasureFamily


class TestUniform:
    """Tests for the uniform measure dy / 2."""

    def test_recurrence(self):
        """beta_n = n / sqrt(4 n^2 - 1)."""
        beta = MeasureFamily.uniform().recurrence(3)
        assert np.allclose(beta, [1 / np.sqrt(3), 2 / np.sqrt(15), 3 / np.sqrt(35)])

    def test_variance(self):
        """Var(y) = 1/3."""
        assert np.isclose(MeasureFamily.uniform().variance, 1.0 / 3.0)

    def test_gauss_rule_matches_legendre(self):
        """Golub-Welsch nodes are the Gauss-Legendre nodes."""
        nodes, weights = MeasureFamily.uniform().gauss_rule(5)
        reference, reference_weights = leggauss(5)
        assert np.allclose(np.sort(nodes), reference)
        assert np.allclose(weights[np.argsort(nodes)], reference_weights / 2.0)

    def test_gauss_rule_exactness(self):
        """Three nodes integrate y^4 exactly."""
        nodes, weights = MeasureFamily.uniform().gauss_rule(3)
        assert np.isclose(weights.sum(), 1.0)
        assert np.isclose(weights @ nodes**4, 0.2)


class TestTruncatedGaussian:
    """Tests for the truncated Gaussian measure."""

    def test_density_normalized(self):
        """The density integrates to one over [-1, 1]."""
        nodes, weights = leggauss(64)
        assert np.isclose(weights @ MeasureFamily.truncated_gaussian(0.5).density(nodes), 1.0, rtol=1e-12)

    def test_wide_gaussian_is_nearly_uniform(self):
        """sigma0 = 100 is within 1e-3 of the uniform recurrence."""
        wide = MeasureFamily.truncated_gaussian(100.0).recurrence(6)
        assert np.max(np.abs(wide - MeasureFamily.uniform().recurrence(6))) < 1e-3

    def test_narrow_variance(self):
        """Truncation shrinks the variance below sigma0^2."""
        measure = MeasureFamily.truncated_gaussian(0.3)
        assert 0.0 < measure.variance < 0.09

    def test_orthonormality(self):
        """Polynomials are orthonormal under the measure's Gauss rule."""
        measure = MeasureFamily.truncated_gaussian(1.0)
        nodes, weights = measure.gauss_rule(8)
        values = measure.evaluate(6, nodes)
        gram = values.T @ (weights[:, None] * values)
        assert np.allclose(gram, np.eye(7), atol=1e-10)

    def test_gauss_rule_matches_variance(self):
        """The Gauss rule reproduces the second moment."""
        measure = MeasureFamily.truncated_gaussian(1.0)
        nodes, weights = measure.gauss_rule(10)
        reference_nodes, reference_weights = leggauss(200)
        second_moment = reference_weights @ (reference_nodes**2 * measure.density(reference_nodes))
        assert np.isclose(weights @ nodes**2, second_moment, rtol=1e-10)
        assert np.isclose(measure.variance, second_moment, rtol=1e-10)

    def test_too_many_coefficients(self):
        """The discretization caps the recurrence length."""
        with pytest.raises(RecurrenceError):
            MeasureFamily.truncated_gaussian(1.0).recurrence(300)


class TestValidation:
    """Tests for measure parameters."""

    def test_unknown_kind(self):
        """Only uniform and truncated Gaussian measures exist."""
        with pytest.raises(ConfigError):
            MeasureFamily("beta")

    def test_nonpositive_sigma(self):
        """sigma0 must be positive."""
        with pytest.raises(ConfigError):
            MeasureFamily.truncated_gaussian(0.0)

    def test_recurrence_length(self):
        """At least one coefficient is requested."""
        with pytest.raises(ConfigError):
            MeasureFamily.uniform().recurrence(0)

    def test_evaluate_shape(self):
        """evaluate returns one row per point and p_0 = 1."""
        values = MeasureFamily.uniform().evaluate(3, np.array([0.0, 0.5]))
        assert values.shape == (2, 4)
        assert np.all(values[:, 0] == 1.0)
        assert np.isclose(values[1, 1], 0.5 * np.sqrt(3.0))
