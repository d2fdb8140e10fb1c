"""
Affine parametric diffusion coefficients a(x, y) = a_0(x) + sum_m y_m a_m(x).

ce1: separable exponential covariance on (-1, 1)^2 with standard deviation
     sigma and correlation lengths (l1, l2); a_m = c sqrt(lambda_m) phi_m.
ce2: a_0 = 1 and planar cosine modes of increasing total order with
     amplitudes A m^-decay, A zeta(decay) = 0.9.
ce3: a_0 = 1 and products of 1D cosine modes with eigenvalues
     1/2 exp(-pi k^2 l^2), reordered by decreasing eigenvalue.
For ce1 and ce3 the constant c makes Var(c y_m) = 1 under the measure.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import zeta

from ..errors import CoercivityError, ConfigError, ExpansionError
from ..fem import Coefficient
from .measures import MeasureFamily

logger = logging.getLogger(__name__)

EXPANSIONS = ("ce1", "ce2", "ce3")
CE2_TAU = 0.9  # A * zeta(decay)


@dataclass(frozen=True)
class Mode1D:
    """amplitude * cos(frequency t), or sin for odd modes."""

    frequency: float
    amplitude: float = 1.0
    odd: bool = False

    def __call__(self, t: np.ndarray) -> np.ndarray:
        wave = np.sin if self.odd else np.cos
        return self.amplitude * wave(self.frequency * np.asarray(t, dtype=float))

    @property
    def sup(self) -> float:
        # sin modes have frequency > pi / 2, so |sin| reaches 1 on [-1, 1]
        return abs(self.amplitude)


@dataclass(frozen=True)
class SeparableMode:
    """phi(x) = first(x1) * second(x2)."""

    first: Mode1D
    second: Mode1D

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.first(points[..., 0]) * self.second(points[..., 1])

    @property
    def sup(self) -> float:
        return self.first.sup * self.second.sup


def ce2_term(m: int, decay: float) -> Tuple[float, int, int]:
    """
    Amplitude and wave numbers of the m-th planar mode.

    Returns:
        (alpha_m, beta1, beta2) with a_m(x) = alpha_m cos(2 pi beta1 x1) cos(2 pi beta2 x2)
    """
    if m < 1:
        raise ConfigError(f"term index must be >= 1, got {m}", "m")
    if not decay > 1.0:
        raise ConfigError(f"decay exponent must exceed 1, got {decay}", "decay")
    k = (math.isqrt(8 * m + 1) - 1) // 2
    beta1 = m - k * (k + 1) // 2
    beta2 = k - beta1
    amplitude = CE2_TAU / float(zeta(decay))
    return amplitude * m ** (-decay), beta1, beta2


def _even_equation(w: float, c: float) -> float:
    return c * np.cos(w) - w * np.sin(w)


def _odd_equation(w: float, c: float) -> float:
    return w * np.cos(w) + c * np.sin(w)


def exponential_modes(length: float, count: int) -> List[Tuple[float, Mode1D]]:
    """
    Eigenpairs of exp(-|s - t| / length) on [-1, 1], largest first.

    Even modes cos(w t) solve c cos w = w sin w on (k pi, k pi + pi/2), odd
    modes sin(w t) solve w cos w = -c sin w on (k pi + pi/2, (k + 1) pi),
    with c = 1 / length; the eigenvalue is 2c / (w^2 + c^2).
    """
    if not length > 0.0:
        raise ConfigError(f"correlation length must be positive, got {length}", "lengths")
    c = 1.0 / length
    modes = []
    for i in range(count):
        k = i // 2
        if i % 2 == 0:
            func = _even_equation
            low, high = k * np.pi, k * np.pi + 0.5 * np.pi
        else:
            func = _odd_equation
            low, high = k * np.pi + 0.5 * np.pi, (k + 1) * np.pi
        try:
            w = brentq(func, low, high, args=(c,), xtol=1e-15, rtol=4 * np.finfo(float).eps)
        except ValueError as exc:
            raise ExpansionError(f"no root of the mode-{i} equation in [{low:.6f}, {high:.6f}]") from exc
        odd = i % 2 == 1
        norm = 1.0 - np.sin(2 * w) / (2 * w) if odd else 1.0 + np.sin(2 * w) / (2 * w)
        modes.append((2.0 * c / (w * w + c * c), Mode1D(w, 1.0 / np.sqrt(norm), odd)))
    return modes


def _sorted_products(first, second, count, scale=1.0):
    values = np.array([[scale * a * b for b, _ in second] for a, _ in first])
    i, j = np.meshgrid(np.arange(len(first)), np.arange(len(second)), indexing="ij")
    i, j, flat = i.ravel(), j.ravel(), values.ravel()
    order = np.lexsort((j, i, -flat))[:count]
    return [(float(flat[o]), SeparableMode(first[i[o]][1], second[j[o]][1])) for o in order]


def ce1_terms(sigma: float, l1: float, l2: float, count: int) -> List[Tuple[float, SeparableMode]]:
    """
    Largest `count` eigenpairs of sigma^2 exp(-|x1 - x1'|/l1 - |x2 - x2'|/l2) on (-1, 1)^2.

    Ties are broken by the 1D mode numbers (i, j) in lexicographic order.
    """
    if not sigma > 0.0:
        raise ConfigError(f"standard deviation must be positive, got {sigma}", "sigma")
    if count < 0:
        raise ConfigError(f"count must be nonnegative, got {count}", "count")
    if count == 0:
        return []
    return _sorted_products(exponential_modes(l1, count), exponential_modes(l2, count), count, sigma**2)


def ce3_terms(length: float, count: int) -> List[Tuple[float, SeparableMode]]:
    """
    Largest `count` products of 1/2 exp(-pi k^2 length^2) eigenvalues.

    The k = 0 mode is the constant 1 with eigenvalue 1/2; k >= 1 modes are
    sqrt(2) cos(pi k t).
    """
    if not length > 0.0:
        raise ConfigError(f"correlation length must be positive, got {length}", "correlation")
    if count == 0:
        return []
    modes = [(0.5, Mode1D(0.0, 1.0))]
    modes += [(0.5 * np.exp(-np.pi * k * k * length * length), Mode1D(np.pi * k, np.sqrt(2.0))) for k in range(1, count)]
    return _sorted_products(modes, modes, count)


@dataclass(frozen=True)
class ParametricCoefficient:
    """
    Affine expansion together with the parameter measure.

    Args:
        kind: "ce1", "ce2" or "ce3"
        measure: distribution of every y_m
        decay: ce2 decay exponent (> 1)
        sigma: ce1 standard deviation; ce3 multiplier of the fluctuation
        lengths: ce1 correlation lengths (l1, l2)
        correlation: ce3 correlation length
        mean: ce1 constant mean a_0 (ce2 and ce3 use a_0 = 1)
    """

    kind: str = "ce2"
    measure: MeasureFamily = MeasureFamily()
    decay: float = 2.0
    sigma: float = 1.0
    lengths: Tuple[float, float] = (1.0, 1.0)
    correlation: float = 1.0
    mean: float = 1.0

    def __post_init__(self):
        if self.kind not in EXPANSIONS:
            raise ConfigError(f"unknown coefficient expansion '{self.kind}'", "expansion")
        if self.kind == "ce2" and not self.decay > 1.0:
            raise ConfigError(f"decay exponent must exceed 1, got {self.decay}", "decay")
        if not self.mean > 0.0:
            raise ConfigError(f"mean coefficient must be positive, got {self.mean}", "mean")
        if len(self.lengths) != 2:
            raise ConfigError(f"expected two correlation lengths, got {self.lengths}", "lengths")
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))

    @property
    def a0_min(self) -> float:
        return self.mean if self.kind == "ce1" else 1.0

    @property
    def scaling(self) -> float:
        """c with Var(c y_m) = 1 (ce1, ce3); 1 for ce2."""
        if self.kind == "ce2":
            return 1.0
        return 1.0 / float(self.measure.recurrence(1)[0])

    def terms(self, count: int) -> List[Tuple[float, SeparableMode]]:
        """(amplitude, mode) of a_1 .. a_count, a_m = amplitude * mode."""
        return list(_terms(self, count))

    def a0(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.full(points.shape[:-1], self.a0_min)

    def a_m(self, m: int, points: np.ndarray) -> np.ndarray:
        if m < 1:
            raise ConfigError(f"term index must be >= 1, got {m}", "m")
        amplitude, mode = self.terms(m)[m - 1]
        return amplitude * mode(points)

    def sup_norms(self, count: int) -> np.ndarray:
        return np.array([abs(amplitude) * mode.sup for amplitude, mode in self.terms(count)])

    def tau(self, count: int) -> float:
        """sum_{m <= count} ||a_m||_inf / min a_0."""
        return float(np.sum(self.sup_norms(count)) / self.a0_min)

    def check_coercive(self, count: int) -> float:
        """
        Raises:
            CoercivityError: if tau >= 1 over the first `count` terms
        """
        tau = self.tau(count)
        if tau >= 1.0:
            raise CoercivityError(f"tau = {tau:.4f} >= 1 over {count} expansion terms")
        return tau

    def evaluate(self, points: np.ndarray, y: np.ndarray) -> np.ndarray:
        """a(x, y) at points (..., 2) for one parameter vector y."""
        values = self.a0(points)
        for m, ym in enumerate(np.asarray(y, dtype=float), start=1):
            if ym != 0.0:
                values = values + ym * self.a_m(m, points)
        return values

    def mean_coefficient(self) -> Coefficient:
        return Coefficient.constant(self.a0_min)

    def term_coefficient(self, m: int) -> Coefficient:
        func: Callable[[np.ndarray], np.ndarray] = lambda points: self.a_m(m, points)
        return Coefficient.function(func)


@lru_cache(maxsize=32)
def _terms(coeff: ParametricCoefficient, count: int) -> Tuple[Tuple[float, SeparableMode], ...]:
    if coeff.kind == "ce2":
        terms = []
        for m in range(1, count + 1):
            alpha, beta1, beta2 = ce2_term(m, coeff.decay)
            terms.append((alpha, SeparableMode(Mode1D(2 * np.pi * beta1), Mode1D(2 * np.pi * beta2))))
        return tuple(terms)
    if coeff.kind == "ce1":
        pairs = ce1_terms(coeff.sigma, coeff.lengths[0], coeff.lengths[1], count)
    else:
        pairs = ce3_terms(coeff.correlation, count)
        pairs = [(coeff.sigma**2 * value, mode) for value, mode in pairs]
    c = coeff.scaling
    logger.debug(f"Expanded {coeff.kind} coefficient to {count} terms")
    return tuple((c * np.sqrt(value), mode) for value, mode in pairs)
