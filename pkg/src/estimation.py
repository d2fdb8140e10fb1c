"""
A posteriori error estimators for P1 and P2 solutions.

ees1: element residual problems in a local bubble space, with averaged
      interior fluxes on the element boundary.
ees2: one global residual problem in the detail space spanned by the
      edge-midpoint hats of the uniformly refined mesh.
ees3: two-level edge indicators from the same detail space, without the
      global solve.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .basis import (
    LOCAL_EDGES,
    ShapeTable,
    edge_points,
    lagrange_values,
    lattice_nodes,
    physical_gradients,
    quadratic_bubble_table,
    quartic_bubble_table,
    subdivision_table,
    to_cartesian,
)
from .errors import EstimatorError
from .fem import (
    Coefficient,
    DeterministicProblem,
    FeSpace,
    FieldSolution,
    local_stiffness,
    scatter_matrix,
    scatter_rectangular,
    scatter_vector,
)
from .mesh import DIRICHLET, NEUMANN, Mesh
from .quadrature import gauss_edge
from .sparse_linalg import solve_spd

logger = logging.getLogger(__name__)

EDGE_POINTS = 4  # Gauss points per edge half


@dataclass(frozen=True)
class ErrorIndicators:
    """
    Local indicators on elements or edges and the total estimate.

    For ees1 and ees3 the total is the l2 norm of the values on their native
    carrier; ees2 reports the energy norm of the detail solution.
    """

    carrier: str
    values: np.ndarray
    total: float

    def __post_init__(self):
        if self.carrier not in ("elements", "edges"):
            raise EstimatorError(f"unknown carrier '{self.carrier}'")
        if np.any(self.values < 0.0):
            raise EstimatorError("indicators must be nonnegative")

    @property
    def squared(self) -> np.ndarray:
        return self.values**2


@dataclass(frozen=True)
class ResidualData:
    """
    Ingredients of the residual for P right-hand sides at once.

    source(bary) -> (Nt, Q, P) load density at reference points of every element
    flux(bary)   -> (Nt, Q, P, 2) discrete flux a grad(u_h)
    neumann(xy)  -> (B, Q, P) Neumann datum at physical points, or None
    """

    mesh: Mesh
    columns: int
    source: Callable[[np.ndarray], np.ndarray]
    flux: Callable[[np.ndarray], np.ndarray]
    neumann: Optional[Callable[[np.ndarray], np.ndarray]] = None


def deterministic_residual(solution: FieldSolution, problem: DeterministicProblem) -> ResidualData:
    mesh = solution.mesh

    def source(bary):
        points = to_cartesian(mesh.vertices, mesh.triangles, bary)
        values = np.asarray(problem.source(points.reshape(-1, 2)), dtype=float)
        return np.broadcast_to(values, (points.shape[0] * points.shape[1],)).reshape(points.shape[:2] + (1,))

    def flux(bary):
        points = to_cartesian(mesh.vertices, mesh.triangles, bary)
        return problem.diffusion.apply(points, solution.gradients(bary))[:, :, None, :]

    neumann = None
    if problem.neumann is not None:
        def neumann(xy):
            return np.asarray(problem.neumann(xy.reshape(-1, 2)), dtype=float).reshape(xy.shape[:2] + (1,))

    return ResidualData(mesh, 1, source, flux, neumann)


@dataclass(frozen=True)
class BubbleSpace:
    """
    Local error space on one element.

    edge_of_function[i] is the local edge a function lives on (-1 for
    interior functions); functions on Dirichlet edges are dropped.
    """

    name: str
    table: ShapeTable
    edge_of_function: np.ndarray
    edge_values: Callable[[int, np.ndarray], np.ndarray]


def _hat(s):
    return 1.0 - np.abs(2.0 * s - 1.0)


def bubble_space(kind: str, subdivision: str = "bisec3") -> BubbleSpace:
    """
    Args:
        kind: "linear" (midpoint hats of a sub-triangulation), "quadratic"
            (edge bubbles) or "quartic" (complement of P2 in P4)
        subdivision: "bisec3" or "red" sub-triangulation for linear bubbles
    """
    if kind == "linear":
        full = subdivision_table(subdivision)
        table = ShapeTable(full.points, full.weights, full.values[:, 3:], full.dlam[:, 3:])

        def edge_values(k, s):
            values = np.zeros((len(s), 3))
            values[:, k] = _hat(s)
            return values

        return BubbleSpace(f"linear-{subdivision}", table, np.arange(3), edge_values)
    if kind == "quadratic":
        def edge_values(k, s):
            values = np.zeros((len(s), 3))
            values[:, k] = 4.0 * s * (1.0 - s)
            return values

        return BubbleSpace("quadratic", quadratic_bubble_table(), np.arange(3), edge_values)
    if kind == "quartic":
        nodes = lattice_nodes(4)
        nodes = nodes[np.array([np.any(node % 2 == 1) for node in nodes])]
        on_edge = np.full(len(nodes), -1)
        for i, node in enumerate(nodes):
            zeros = np.flatnonzero(node == 0)
            if len(zeros) == 1:
                on_edge[i] = zeros[0]

        def edge_values(k, s):
            values, _ = lagrange_values(4, nodes, edge_points(LOCAL_EDGES, s)[k])
            return values

        return BubbleSpace("quartic", quartic_bubble_table(), on_edge, edge_values)
    raise EstimatorError(f"unknown bubble space '{kind}'")


def _neighbors(mesh: Mesh):
    """Neighbor triangle and its local edge index across every local edge, -1 on the boundary."""
    table = mesh.edge_table
    e2t = table.edge_of_triangle
    own = np.arange(mesh.num_triangles)[:, None]
    pair = table.triangles_of_edge[e2t]  # (Nt, 3, 2)
    local = table.local_index[e2t]
    first = pair[:, :, 0] == own
    neighbor = np.where(first, pair[:, :, 1], pair[:, :, 0])
    neighbor_local = np.where(first, local[:, :, 1], local[:, :, 0])
    return neighbor, neighbor_local


def edge_flux_terms(data: ResidualData) -> np.ndarray:
    """
    Boundary data of the element residual problems.

    Returns:
        (Nt, 3, Qe, P) averaged normal flux times edge length at the
        split Gauss points of every local edge; Neumann edges carry the
        datum and Dirichlet edges zero
    """
    mesh = data.mesh
    rule = gauss_edge(EDGE_POINTS, split=True)
    bary = edge_points(LOCAL_EDGES, rule.points)  # (3, Qe, 3)
    fluxes = np.stack([data.flux(bary[k]) for k in range(3)])  # (3, Nt, Qe, P, 2)
    corners = mesh.vertices[mesh.triangles]
    tangents = corners[:, LOCAL_EDGES[:, 1]] - corners[:, LOCAL_EDGES[:, 0]]  # (Nt, 3, 2)
    normals = np.stack([tangents[..., 1], -tangents[..., 0]], axis=-1)  # outward, length |E|

    neighbor, neighbor_local = _neighbors(mesh)
    own = np.transpose(fluxes, (1, 0, 2, 3, 4))  # (Nt, 3, Qe, P, 2)
    averaged = own.copy()
    interior = neighbor >= 0
    averaged[interior] = 0.5 * (
        own[interior] + fluxes[neighbor_local[interior], neighbor[interior]][:, ::-1]
    )
    g = np.einsum("tkqpd,tkd->tkqp", averaged, normals)

    markers = mesh.edge_markers[mesh.edge_table.edge_of_triangle]
    g[markers == DIRICHLET] = 0.0
    neumann_local = markers == NEUMANN
    if np.any(neumann_local):
        if data.neumann is None:
            g[neumann_local] = 0.0
        else:
            tri, k = np.nonzero(neumann_local)
            xy = np.einsum("bqk,bkd->bqd", bary[k], corners[tri])
            lengths = np.linalg.norm(tangents[tri, k], axis=1)
            g[tri, k] = lengths[:, None, None] * data.neumann(xy)
    return g


def solve_local_problems(data: ResidualData, bubbles: BubbleSpace, coeff: Coefficient):
    """
    Solve the element residual problems for every element and column.

    Args:
        data: residual ingredients
        bubbles: local error space
        coeff: coefficient of the local bilinear form

    Returns:
        (local matrices (Nt, n, n), solutions (Nt, n, P))
    """
    mesh = data.mesh
    table = bubbles.table
    areas, grads = mesh.geometry
    matrices = local_stiffness(mesh, table, coeff)
    psi_grad = physical_gradients(table.dlam, grads)
    source = data.source(table.points)
    flux = data.flux(table.points)
    rhs = areas[:, None, None] * (
        np.einsum("q,tqp,qi->tip", table.weights, source, table.values)
        - np.einsum("q,tqpd,tqid->tip", table.weights, flux, psi_grad)
    )

    rule = gauss_edge(EDGE_POINTS, split=True)
    g = edge_flux_terms(data)
    for k in range(3):
        psi = bubbles.edge_values(k, rule.points)  # (Qe, n)
        rhs += np.einsum("q,tqp,qi->tip", rule.weights, g[:, k], psi)

    markers = mesh.edge_markers[mesh.edge_table.edge_of_triangle]
    on_edge = bubbles.edge_of_function
    dropped = np.zeros((mesh.num_triangles, len(on_edge)), dtype=bool)
    for i, k in enumerate(on_edge):
        if k >= 0:
            dropped[:, i] = markers[:, k] == DIRICHLET
    tri, col = np.nonzero(dropped)
    matrices[tri, col, :] = 0.0
    matrices[tri, :, col] = 0.0
    matrices[tri, col, col] = 1.0
    rhs[tri, col, :] = 0.0
    try:
        errors = np.linalg.solve(matrices, rhs)
    except np.linalg.LinAlgError as exc:
        raise EstimatorError("singular local residual problem") from exc
    return matrices, errors


def estimate_ees1(
    mesh: Mesh,
    space: FeSpace,
    solution: FieldSolution,
    problem: DeterministicProblem,
    bubble: str = "linear",
    subdivision: str = "bisec3",
) -> ErrorIndicators:
    """
    Element residual estimator.

    Linear and quadratic bubbles need a P1 solution (3x3 local systems);
    quartic bubbles need P2 (9x9 local systems).
    """
    expected = 2 if bubble == "quartic" else 1
    if space.order != expected:
        raise EstimatorError(f"{bubble} bubbles require a P{expected} solution, got P{space.order}")
    data = deterministic_residual(solution, problem)
    matrices, errors = solve_local_problems(data, bubble_space(bubble, subdivision), problem.diffusion)
    squared = np.einsum("tip,tij,tjp->t", errors, matrices, errors)
    values = np.sqrt(np.maximum(squared, 0.0))
    total = float(np.sqrt(np.sum(values**2)))
    logger.debug(f"ees1 ({bubble}) total estimate {total:.4e}")
    return ErrorIndicators("elements", values, total)


class HierarchicalSystem:
    """
    Two-level detail space on a P1 mesh.

    The detail functions are the hats at the midpoints of all edges not on
    the Dirichlet boundary, built on the red (default) or bisec3
    sub-triangulation of every element.
    """

    def __init__(self, mesh: Mesh, coeff: Coefficient, subdivision: str = "red"):
        self.mesh = mesh
        self.coefficient = coeff
        full = subdivision_table(subdivision)
        self.detail_table = ShapeTable(full.points, full.weights, full.values[:, 3:], full.dlam[:, 3:])
        self.coarse_table = ShapeTable(
            full.points,
            full.weights,
            full.points.copy(),
            np.broadcast_to(np.eye(3), (len(full.weights), 3, 3)).copy(),
        )
        table = mesh.edge_table
        self.detail_edges = np.flatnonzero(mesh.edge_markers != DIRICHLET)
        self.detail_index = np.full(table.count, -1, dtype=np.int64)
        self.detail_index[self.detail_edges] = np.arange(len(self.detail_edges))
        self.detail_dofs = self.detail_index[table.edge_of_triangle]
        self.local_matrices = local_stiffness(mesh, self.detail_table, coeff)
        n = len(self.detail_edges)
        self.matrix = scatter_matrix(self.detail_dofs, self.local_matrices, (n, n))
        self.diagonal = self.matrix.diagonal()

    @property
    def size(self) -> int:
        return len(self.detail_edges)

    def coupling(self, coeff: Coefficient = None) -> sp.csr_matrix:
        """Detail-by-vertex matrix B(phi_E, lambda_j) for a coefficient."""
        local = local_stiffness(self.mesh, self.coarse_table, coeff or self.coefficient, test=self.detail_table)
        return scatter_rectangular(
            self.detail_dofs, self.mesh.triangles, local, (self.size, self.mesh.num_vertices)
        )

    def load(self, source, neumann=None) -> np.ndarray:
        """Detail load int f phi_E plus Neumann contributions."""
        mesh = self.mesh
        areas, _ = mesh.geometry
        table = self.detail_table
        points = to_cartesian(mesh.vertices, mesh.triangles, table.points)
        values = np.asarray(source(points.reshape(-1, 2)), dtype=float)
        values = np.broadcast_to(values, (points.shape[0] * points.shape[1],)).reshape(points.shape[:2])
        local = areas[:, None] * np.einsum("q,tq,qi->ti", table.weights, values, table.values)
        load = scatter_vector(self.detail_dofs, local, self.size)
        if neumann is not None and np.any(mesh.boundary_markers == NEUMANN):
            rule = gauss_edge(EDGE_POINTS, split=True)
            tri, k, xy = _split_boundary_quadrature(mesh, NEUMANN)
            g = np.asarray(neumann(xy.reshape(-1, 2)), dtype=float).reshape(xy.shape[:2])
            lengths = _local_lengths(mesh, tri, k)
            contrib = lengths * np.einsum("q,bq,q->b", rule.weights, g, _hat(rule.points))
            ids = self.detail_dofs[tri, k]
            load += scatter_vector(ids[:, None], contrib[:, None], self.size)
        return load

    def residual(self, values: np.ndarray, source, neumann=None) -> np.ndarray:
        """Detail residual F(phi_E) - B(u_h, phi_E) for a P1 vertex vector."""
        return self.load(source, neumann) - self.coupling() @ values


def _local_lengths(mesh: Mesh, tri: np.ndarray, k: np.ndarray) -> np.ndarray:
    corners = mesh.vertices[mesh.triangles[tri]]
    rows = np.arange(len(tri))
    return np.linalg.norm(corners[rows, LOCAL_EDGES[k, 1]] - corners[rows, LOCAL_EDGES[k, 0]], axis=1)


def _split_boundary_quadrature(mesh: Mesh, marker: int):
    """Split Gauss points on boundary edges carrying `marker`."""
    table = mesh.edge_table
    ids = np.flatnonzero(mesh.edge_markers == marker)
    tri = table.triangles_of_edge[ids, 0]
    k = table.local_index[ids, 0]
    rule = gauss_edge(EDGE_POINTS, split=True)
    bary = edge_points(LOCAL_EDGES, rule.points)[k]
    xy = np.einsum("bqk,bkd->bqd", bary, mesh.vertices[mesh.triangles[tri]])
    return tri, k, xy


def _require_p1(space: FeSpace, name: str):
    if space.order != 1:
        raise EstimatorError(f"{name} is only available for P1 approximations")


def estimate_ees2(
    mesh: Mesh,
    space: FeSpace,
    solution: FieldSolution,
    problem: DeterministicProblem,
    localize: str = "elements",
    subdivision: str = "red",
) -> ErrorIndicators:
    """
    Global hierarchical estimator.

    Element localization splits the detail energy exactly; edge
    localization reports |e_E| * A_EE^(1/2) per non-Dirichlet edge.
    """
    _require_p1(space, "ees2")
    system = HierarchicalSystem(mesh, problem.diffusion, subdivision)
    residual = system.residual(solution.values, problem.source, problem.neumann)
    if system.size == 0:
        detail = np.zeros(0)
    else:
        detail = solve_spd(system.matrix, residual)
    total = float(np.sqrt(max(detail @ residual, 0.0)))
    if localize == "elements":
        padded = np.append(detail, 0.0)
        local = padded[system.detail_dofs]  # -1 picks the appended zero
        squared = np.einsum("ti,tij,tj->t", local, system.local_matrices, local)
        values = np.sqrt(np.maximum(squared, 0.0))
    elif localize == "edges":
        values = np.zeros(mesh.edge_table.count)
        values[system.detail_edges] = np.abs(detail) * np.sqrt(system.diagonal)
    else:
        raise EstimatorError(f"unknown localization '{localize}'")
    logger.debug(f"ees2 total estimate {total:.4e} over {system.size} detail dofs")
    return ErrorIndicators(localize, values, total)


def two_level_edge_indicators(system: HierarchicalSystem, residual: np.ndarray) -> np.ndarray:
    """
    |r_E| / A_EE^(1/2) per edge, zero on Dirichlet edges.

    A residual with several columns (N_D, P) is combined in the l2 sense.
    """
    residual = residual.reshape(system.size, -1)
    values = np.zeros(system.mesh.edge_table.count)
    values[system.detail_edges] = np.sqrt(np.sum(residual**2, axis=1) / system.diagonal)
    return values


def edges_to_elements(mesh: Mesh, edge_values: np.ndarray) -> np.ndarray:
    """Element values sqrt(sum of squared indicators of the element's own edges)."""
    return np.sqrt(np.sum(edge_values[mesh.edge_table.edge_of_triangle] ** 2, axis=1))


def estimate_ees3(
    mesh: Mesh,
    space: FeSpace,
    solution: FieldSolution,
    problem: DeterministicProblem,
    localize: str = "edges",
    subdivision: str = "red",
) -> ErrorIndicators:
    """
    Two-level estimator without a global solve.

    The total is always the l2 norm of the edge indicators; element values
    sum the squares of the element's own (non-Dirichlet) edges.
    """
    _require_p1(space, "ees3")
    system = HierarchicalSystem(mesh, problem.diffusion, subdivision)
    residual = system.residual(solution.values, problem.source, problem.neumann)
    edge_values = two_level_edge_indicators(system, residual)
    total = float(np.sqrt(np.sum(edge_values**2)))
    if localize == "edges":
        values = edge_values
    elif localize == "elements":
        values = edges_to_elements(mesh, edge_values)
    else:
        raise EstimatorError(f"unknown localization '{localize}'")
    logger.debug(f"ees3 total estimate {total:.4e}")
    return ErrorIndicators(localize, values, total)


def effectivity_indices(estimates, errors) -> np.ndarray:
    """Elementwise ratio estimate / reference error."""
    estimates = np.asarray(estimates, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if estimates.shape != errors.shape:
        raise EstimatorError(f"shape mismatch: {estimates.shape} vs {errors.shape}")
    return estimates / errors
