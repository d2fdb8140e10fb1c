"""
Element geometry and reference shape tables.

A ShapeTable holds basis values and barycentric derivatives at quadrature
points of the reference triangle. Physical gradients follow from the
barycentric gradients of each element, see `physical_gradients`.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .errors import DegenerateElementError
from .quadrature import TriangleRule, collapsed_gauss, composite, dunavant7

AREA_TOL = 1e-14  # relative to the squared element diameter

# Local nodes 3, 4, 5 are the midpoints of the edges opposite vertices 0, 1, 2
MIDPOINT_NODES = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
    ]
)

# Sub-triangulations of one element on the six nodes above
RED_SUBTRIANGLES = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2], [3, 4, 5]])
BISEC3_SUBTRIANGLES = np.array([[5, 2, 4], [0, 5, 4], [5, 1, 3], [2, 5, 3]])

# Local vertex pairs of the edges opposite vertices 0, 1, 2
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True)
class ShapeTable:
    """
    Basis functions tabulated on a reference quadrature rule.

    Attributes:
        points: (Q, 3) barycentric quadrature points
        weights: (Q,) weights summing to one
        values: (Q, n) basis values
        dlam: (Q, n, 3) derivatives with respect to the barycentric coordinates
    """

    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    dlam: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[1]


def element_geometry(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Areas and barycentric gradients of every triangle.

    Args:
        vertices: (Nv, 2) coordinates
        triangles: (Nt, 3) counterclockwise vertex ids

    Returns:
        areas (Nt,) and gradients (Nt, 3, 2) with rows grad(lambda_k)

    Raises:
        DegenerateElementError: if a triangle has non-positive area
    """
    p = vertices[triangles]
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    twice_area = e2[:, 0] * (-e1[:, 1]) - (-e1[:, 0]) * e2[:, 1]
    diam2 = np.max(
        np.stack([np.sum(e0**2, 1), np.sum(e1**2, 1), np.sum(e2**2, 1)]), axis=0
    )
    bad = twice_area <= AREA_TOL * diam2
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise DegenerateElementError(
            f"triangle {first} has signed area {0.5 * twice_area[first]:.3e}"
        )
    # grad(lambda_k) is the inward normal of the opposite edge scaled by 1/(2A)
    grads = np.empty((len(triangles), 3, 2))
    for k, edge in enumerate((e0, e1, e2)):
        grads[:, k, 0] = -edge[:, 1]
        grads[:, k, 1] = edge[:, 0]
    grads /= twice_area[:, None, None]
    return 0.5 * twice_area, grads


def physical_gradients(dlam: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Map (Q, n, 3) barycentric derivatives to (Nt, Q, n, 2) gradients."""
    return np.einsum("qnk,tkd->tqnd", dlam, grads)


def to_cartesian(vertices: np.ndarray, triangles: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical coordinates (Nt, Q, 2) of barycentric points (Q, 3)."""
    return np.einsum("qk,tkd->tqd", bary, vertices[triangles])


def barycentric(corners: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of `point` with respect to a (3, 2) triangle."""
    matrix = np.vstack([corners.T, np.ones(3)])
    return np.linalg.solve(matrix, np.array([point[0], point[1], 1.0]))


def lattice_nodes(degree: int) -> np.ndarray:
    """
    Integer lattice nodes (n, 3) of the degree-p Lagrange element.

    Vertices come first, then for degree 2 the edge midpoints in the
    `MIDPOINT_NODES` order; higher degrees list the rest lexicographically.
    """
    nodes = [
        (i, j, degree - i - j)
        for i in range(degree, -1, -1)
        for j in range(degree - i, -1, -1)
    ]
    head = [tuple(int(round(degree * c)) for c in row) for row in MIDPOINT_NODES[:3]]
    if degree % 2 == 0:
        head += [tuple(int(round(degree * c)) for c in row) for row in MIDPOINT_NODES[3:]]
    rest = [node for node in nodes if node not in head]
    return np.array(head + rest, dtype=int)


def lagrange_values(degree: int, nodes: np.ndarray, bary: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lagrange basis functions on the degree-p lattice.

    phi_alpha = prod_i prod_{l < alpha_i} (p * lambda_i - l) / (l + 1)

    Args:
        degree: polynomial degree p
        nodes: (n, 3) lattice multi-indices selecting the basis functions
        bary: (Q, 3) evaluation points

    Returns:
        values (Q, n) and barycentric derivatives (Q, n, 3)
    """
    q = len(bary)
    values = np.ones((q, len(nodes)))
    dlam = np.zeros((q, len(nodes), 3))
    for n, alpha in enumerate(nodes):
        factors = np.ones((q, 3))
        derivs = np.zeros((q, 3))
        for i in range(3):
            for l in range(alpha[i]):
                term = (degree * bary[:, i] - l) / (l + 1)
                derivs[:, i] = derivs[:, i] * term + factors[:, i] * degree / (l + 1)
                factors[:, i] = factors[:, i] * term
        values[:, n] = np.prod(factors, axis=1)
        for i in range(3):
            others = [k for k in range(3) if k != i]
            dlam[:, n, i] = derivs[:, i] * factors[:, others[0]] * factors[:, others[1]]
    return values, dlam


def lagrange_table(degree: int, rule: TriangleRule = None) -> ShapeTable:
    """P1 or P2 Lagrange basis on a triangle rule (default: seven-point rule)."""
    rule = rule or dunavant7()
    values, dlam = lagrange_values(degree, lattice_nodes(degree), rule.points)
    return ShapeTable(rule.points, rule.weights, values, dlam)


@lru_cache(maxsize=None)
def quartic_bubble_table() -> ShapeTable:
    """
    The nine quartic Lagrange functions whose nodes are not P2 nodes.

    They span the hierarchical complement of P2 inside P4: six functions
    tied to edges and three interior ones. Integrated with a rule that is
    exact for degree 8 products.
    """
    rule = collapsed_gauss(6)
    nodes = lattice_nodes(4)
    keep = np.array([np.any(node % 2 == 1) for node in nodes])
    values, dlam = lagrange_values(4, nodes[keep], rule.points)
    return ShapeTable(rule.points, rule.weights, values, dlam)


@lru_cache(maxsize=None)
def quadratic_bubble_table() -> ShapeTable:
    """Edge bubbles 4 * lambda_i * lambda_j on edges opposite vertices 0, 1, 2."""
    rule = dunavant7()
    lam = rule.points
    values = np.zeros((len(lam), 3))
    dlam = np.zeros((len(lam), 3, 3))
    for k, (i, j) in enumerate(LOCAL_EDGES):
        values[:, k] = 4.0 * lam[:, i] * lam[:, j]
        dlam[:, k, i] = 4.0 * lam[:, j]
        dlam[:, k, j] = 4.0 * lam[:, i]
    return ShapeTable(rule.points, rule.weights, values, dlam)


@lru_cache(maxsize=None)
def subdivision_table(kind: str = "red", gauss_points: int = 0) -> ShapeTable:
    """
    Piecewise linear hats of the six local nodes on a sub-triangulation.

    Args:
        kind: "red" or "bisec3"
        gauss_points: collapsed Gauss size per sub-triangle, 0 for the
            seven-point rule

    Returns:
        ShapeTable with six functions (vertex hats then midpoint hats)
        on the composite rule
    """
    rule = collapsed_gauss(gauss_points) if gauss_points else dunavant7()
    subs = RED_SUBTRIANGLES if kind == "red" else BISEC3_SUBTRIANGLES
    corners = MIDPOINT_NODES[subs]  # (S, 3, 3)
    merged = composite(rule, corners)
    q = rule.size
    values = np.zeros((len(merged.weights), 6))
    dlam = np.zeros((len(merged.weights), 6, 3))
    for s, nodes in enumerate(subs):
        block = slice(s * q, (s + 1) * q)
        inverse = np.linalg.inv(corners[s])  # lambda @ inverse = local barycentrics
        for local, node in enumerate(nodes):
            values[block, node] = rule.points[:, local]
            dlam[block, node, :] = inverse[:, local]
    return ShapeTable(merged.points, merged.weights, values, dlam)


def edge_points(local_edges: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (E, Q, 3) of points s in (0,1) along local edges."""
    bary = np.zeros((len(local_edges), len(s), 3))
    for row, (a, b) in enumerate(local_edges):
        bary[row, :, a] = 1.0 - s
        bary[row, :, b] = s
    return bary
