"""
Symmetric probability measures on [-1, 1] and their orthonormal polynomials.

The polynomials satisfy y p_n = beta_{n+1} p_{n+1} + beta_n p_{n-1} with
p_0 = 1; symmetry makes the diagonal recurrence coefficients vanish.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eig_banded
from scipy.special import ndtr

from ..errors import ConfigError, RecurrenceError

logger = logging.getLogger(__name__)

MEASURES = ("uniform", "truncated_gaussian")
STIELTJES_POINTS = 512  # Gauss-Legendre nodes discretizing the density
ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class MeasureFamily:
    """
    Distribution of every parameter y_m.

    uniform: dy / 2. truncated_gaussian: the N(0, sigma0^2) density
    restricted to [-1, 1] and renormalized.
    """

    kind: str = "uniform"
    sigma0: float = 1.0

    def __post_init__(self):
        if self.kind not in MEASURES:
            raise ConfigError(f"unknown measure '{self.kind}'", "measure")
        if not self.sigma0 > 0.0:
            raise ConfigError(f"sigma0 must be positive, got {self.sigma0}", "sigma0")

    @classmethod
    def uniform(cls) -> "MeasureFamily":
        return cls("uniform")

    @classmethod
    def truncated_gaussian(cls, sigma0: float = 1.0) -> "MeasureFamily":
        return cls("truncated_gaussian", float(sigma0))

    def density(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "uniform":
            return np.full(y.shape, 0.5)
        s = self.sigma0
        mass = s * np.sqrt(2.0 * np.pi) * (2.0 * ndtr(1.0 / s) - 1.0)
        return np.exp(-(y**2) / (2.0 * s * s)) / mass

    def recurrence(self, n_max: int) -> np.ndarray:
        """
        Recurrence coefficients beta_1 .. beta_{n_max}.

        Returns:
            array whose entry n - 1 holds beta_n

        Raises:
            RecurrenceError: if the discretized procedure loses positivity
                or orthonormality
        """
        if n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {n_max}", "n_max")
        return np.array(_recurrence(self.kind, self.sigma0, int(n_max)))

    @property
    def variance(self) -> float:
        """Var(y) = beta_1^2."""
        return float(self.recurrence(1)[0] ** 2)

    def evaluate(self, n_max: int, y: np.ndarray) -> np.ndarray:
        """Orthonormal polynomials p_0 .. p_{n_max} at points y, shape (len(y), n_max + 1)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        values = np.zeros((len(y), n_max + 1))
        values[:, 0] = 1.0
        if n_max == 0:
            return values
        beta = self.recurrence(n_max)
        values[:, 1] = y / beta[0]
        for n in range(1, n_max):
            values[:, n + 1] = (y * values[:, n] - beta[n - 1] * values[:, n - 1]) / beta[n]
        return values

    def gauss_rule(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        n-point Gauss rule of the measure from its Jacobi matrix.

        Exact for polynomials of degree 2n - 1; weights sum to 1.
        """
        if n < 1:
            raise ConfigError(f"rule size must be >= 1, got {n}", "n")
        offdiag = self.recurrence(n)[: n - 1] if n > 1 else np.zeros(0)
        band = np.vstack([np.concatenate([[0.0], offdiag]), np.zeros(n)])
        nodes, vectors = eig_banded(band)
        return nodes, vectors[0, :] ** 2


@lru_cache(maxsize=64)
def _recurrence(kind: str, sigma0: float, n_max: int) -> Tuple[float, ...]:
    if kind == "uniform":
        n = np.arange(1, n_max + 1, dtype=float)
        return tuple(n / np.sqrt(4.0 * n * n - 1.0))
    if n_max >= STIELTJES_POINTS // 2:
        raise RecurrenceError(f"{n_max} coefficients exceed the {STIELTJES_POINTS}-point discretization")
    nodes, weights = leggauss(STIELTJES_POINTS)
    weights = weights * MeasureFamily(kind, sigma0).density(nodes)
    weights = weights / weights.sum()

    beta = np.zeros(n_max)
    table = np.zeros((STIELTJES_POINTS, n_max + 1))
    table[:, 0] = 1.0
    previous = np.zeros(STIELTJES_POINTS)
    for n in range(n_max):
        current = table[:, n]
        q = nodes * current - (beta[n - 1] * previous if n > 0 else 0.0)
        q -= np.dot(weights, q * current) * current  # zero for a symmetric measure
        norm = np.sqrt(np.dot(weights, q * q))
        if not norm > 0.0:
            raise RecurrenceError(f"recurrence coefficient beta_{n + 1} is not positive")
        beta[n] = norm
        previous = current
        table[:, n + 1] = q / norm

    gram = table.T @ (weights[:, None] * table)
    residual = float(np.max(np.abs(gram - np.eye(n_max + 1))))
    if residual > ORTHONORMALITY_TOL:
        raise RecurrenceError(f"orthonormality residual {residual:.2e} after {n_max} steps")
    logger.debug(f"Stieltjes recurrence for {kind}(sigma0={sigma0}): {n_max} coefficients")
    return tuple(beta)
