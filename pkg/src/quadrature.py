"""
Quadrature rules on the reference triangle and on edges.

Triangle rules are stored in barycentric coordinates with weights that sum
to one, so an element integral is `area * sum(w_q * g(x_q))`.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT15 = np.sqrt(15.0)


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature points (Q, 3) in barycentric coordinates and weights (Q,)."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class EdgeRule:
    """Points in (0, 1) along an edge and weights summing to one."""

    points: np.ndarray
    weights: np.ndarray


def _frozen(*arrays):
    for array in arrays:
        array.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def dunavant7() -> TriangleRule:
    """Seven-point rule, exact for polynomials of degree 5."""
    a = (6.0 - SQRT15) / 21.0
    b = (6.0 + SQRT15) / 21.0
    wa = (155.0 - SQRT15) / 1200.0
    wb = (155.0 + SQRT15) / 1200.0
    points = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * a, a, a],
            [a, 1 - 2 * a, a],
            [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b],
            [b, 1 - 2 * b, b],
            [b, b, 1 - 2 * b],
        ]
    )
    weights = np.array([0.225, wa, wa, wa, wb, wb, wb])
    return TriangleRule(*_frozen(points, weights))


@lru_cache(maxsize=None)
def collapsed_gauss(n: int) -> TriangleRule:
    """
    Conical product Gauss rule with n*n points.

    The square [0,1]^2 is collapsed onto the triangle; the rule integrates
    polynomials up to degree 2n - 2 exactly.
    """
    nodes, gl_weights = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (nodes + 1.0)
    w = 0.5 * gl_weights
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    weights = 2.0 * (wu * wv * (1.0 - u)).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    return TriangleRule(*_frozen(points, weights))


def red_subtriangles(levels: int) -> np.ndarray:
    """Barycentric vertex matrices (S, 3, 3) of `levels` red subdivisions."""
    current = [np.eye(3)]
    for _ in range(levels):
        refined = []
        for tri in current:
            v0, v1, v2 = tri
            m0, m1, m2 = 0.5 * (v1 + v2), 0.5 * (v2 + v0), 0.5 * (v0 + v1)
            refined.extend(
                [
                    np.array([v0, m2, m1]),
                    np.array([m2, v1, m0]),
                    np.array([m1, m0, v2]),
                    np.array([m0, m1, m2]),
                ]
            )
        current = refined
    return np.array(current)


def composite(rule: TriangleRule, subtriangles: np.ndarray) -> TriangleRule:
    """Apply `rule` on every sub-triangle given in barycentric coordinates."""
    relative_area = np.abs(np.linalg.det(subtriangles))
    points = np.einsum("qk,skl->sql", rule.points, subtriangles).reshape(-1, 3)
    weights = (relative_area[:, None] * rule.weights[None, :]).ravel()
    return TriangleRule(*_frozen(points, weights))


@lru_cache(maxsize=None)
def subdivided(n: int, levels: int) -> TriangleRule:
    """Collapsed Gauss rule applied on `levels` red subdivisions."""
    return composite(collapsed_gauss(n), red_subtriangles(levels))


@lru_cache(maxsize=None)
def gauss_edge(n: int, split: bool = True) -> EdgeRule:
    """
    Gauss-Legendre rule on (0, 1).

    With `split` the two halves are integrated separately, which is exact for
    piecewise polynomials with a kink at the midpoint (edge hat functions).
    """
    nodes, gl_weights = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (nodes + 1.0)
    w = 0.5 * gl_weights
    if split:
        points = np.concatenate([0.5 * t, 0.5 + 0.5 * t])
        weights = np.concatenate([0.5 * w, 0.5 * w])
    else:
        points, weights = t, w
    return EdgeRule(*_frozen(points.copy(), weights.copy()))
