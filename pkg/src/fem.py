"""
P1/P2 Lagrange spaces, stiffness and load assembly, and deterministic solves.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .basis import (
    LOCAL_EDGES,
    ShapeTable,
    edge_points,
    lagrange_table,
    lagrange_values,
    lattice_nodes,
    physical_gradients,
    to_cartesian,
)
from .errors import AssemblyError, CoercivityError, NonFiniteDataError, NonNestedMeshError
from .mesh import DIRICHLET, NEUMANN, DomainKind, Mesh
from .quadrature import gauss_edge
from .sparse_linalg import SpdFactor, solve_spd

logger = logging.getLogger(__name__)

NEUMANN_EDGE_POINTS = 4

ScalarField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FeSpace:
    """
    Continuous Lagrange space on a mesh.

    P2 dofs are the vertices followed by the edges in edge-table order;
    local dofs 3, 4, 5 sit on the edges opposite vertices 0, 1, 2.
    """

    mesh: Mesh
    order: int
    coordinates: np.ndarray
    dof_of_triangle: np.ndarray
    fixed: np.ndarray
    free: np.ndarray

    @property
    def num_dofs(self) -> int:
        return len(self.coordinates)

    @property
    def num_free(self) -> int:
        return len(self.free)

    @property
    def local_size(self) -> int:
        return self.dof_of_triangle.shape[1]


def build_space(mesh: Mesh, order: int = 1) -> FeSpace:
    """P1 or P2 space with Dirichlet dofs fixed."""
    if order not in (1, 2):
        raise AssemblyError(f"unsupported element order P{order}")
    table = mesh.edge_table
    dirichlet_edges = np.flatnonzero(mesh.edge_markers == DIRICHLET)
    fixed = np.unique(table.edges[dirichlet_edges])
    coordinates = mesh.vertices
    dofs = mesh.triangles
    if order == 2:
        nv = mesh.num_vertices
        midpoints = mesh.vertices[table.edges].mean(axis=1)
        coordinates = np.vstack([mesh.vertices, midpoints])
        dofs = np.hstack([mesh.triangles, nv + table.edge_of_triangle])
        fixed = np.concatenate([fixed, nv + dirichlet_edges])
    free = np.setdiff1d(np.arange(len(coordinates)), fixed)
    return FeSpace(mesh, order, coordinates, dofs.astype(np.int64), fixed.astype(np.int64), free)


@dataclass(frozen=True)
class Coefficient:
    """
    Diffusion coefficient: a constant, a constant SPD tensor or a scalar field.

    Use the `constant`, `tensor` and `function` constructors.
    """

    kind: str
    value: Union[float, np.ndarray, ScalarField]

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        if not value > 0.0:
            raise CoercivityError(f"constant coefficient must be positive, got {value}")
        return cls("constant", float(value))

    @classmethod
    def tensor(cls, matrix) -> "Coefficient":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (2, 2) or not np.allclose(matrix, matrix.T):
            raise CoercivityError("tensor coefficient must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(matrix).min() <= 0.0:
            raise CoercivityError("tensor coefficient must be positive definite")
        return cls("tensor", matrix)

    @classmethod
    def function(cls, func: ScalarField) -> "Coefficient":
        return cls("function", func)

    @property
    def is_tensor(self) -> bool:
        return self.kind == "tensor"

    def at(self, points: np.ndarray) -> np.ndarray:
        """Scalar values (...) at points (..., 2); tensors return (..., 2, 2)."""
        shape = points.shape[:-1]
        if self.kind == "constant":
            return np.full(shape, self.value)
        if self.kind == "tensor":
            return np.broadcast_to(self.value, shape + (2, 2))
        values = np.asarray(self.value(points.reshape(-1, 2)), dtype=float).reshape(shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteDataError("coefficient is not finite at a quadrature point")
        return values

    def apply(self, points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
        """
        Coefficient times vectors.

        Args:
            points: (Nt, Q, 2)
            vectors: (Nt, Q, ..., 2)
        """
        values = self.at(points)
        if self.is_tensor:
            return np.einsum("de,...e->...d", self.value, vectors)
        extra = vectors.ndim - values.ndim
        return values.reshape(values.shape + (1,) * extra) * vectors

    def check_coercive(self, points: np.ndarray) -> float:
        """Smallest sampled value; raises CoercivityError if not positive."""
        if self.kind == "tensor":
            return float(np.linalg.eigvalsh(self.value).min())
        low = float(np.min(self.at(points)))
        if low <= 0.0:
            raise CoercivityError(f"coefficient attains {low:.3e} at a quadrature point")
        return low


@dataclass(frozen=True)
class DeterministicProblem:
    """-div(a grad u) = f in D, u = g on the Dirichlet part, a du/dn = g_N elsewhere."""

    domain: DomainKind
    diffusion: Coefficient
    source: ScalarField
    dirichlet: Optional[ScalarField] = None
    neumann: Optional[ScalarField] = None

    def dirichlet_values(self, points: np.ndarray) -> np.ndarray:
        if self.dirichlet is None:
            return np.zeros(len(points))
        return np.asarray(self.dirichlet(points), dtype=float).reshape(len(points))


def local_stiffness(mesh: Mesh, table: ShapeTable, coeff: Coefficient, test: ShapeTable = None) -> np.ndarray:
    """
    Element matrices int_K grad(test_i) . a grad(trial_j) on a shape table.

    Returns:
        (Nt, n_test, n_trial) array
    """
    areas, grads = mesh.geometry
    test = test or table
    trial_grad = physical_gradients(table.dlam, grads)  # (Nt, Q, n, 2)
    test_grad = trial_grad if test is table else physical_gradients(test.dlam, grads)
    points = to_cartesian(mesh.vertices, mesh.triangles, table.points)
    flux = coeff.apply(points, trial_grad)
    return areas[:, None, None] * np.einsum("q,tqid,tqjd->tij", table.weights, test_grad, flux)


def _closed_form_p1(mesh: Mesh, coeff: Coefficient) -> np.ndarray:
    areas, grads = mesh.geometry
    matrix = np.eye(2) * coeff.value if coeff.kind == "constant" else coeff.value
    return areas[:, None, None] * np.einsum("tid,de,tje->tij", grads, matrix, grads)


def scatter_matrix(dofs: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    """
    Sum element matrices into a CSR matrix.

    Duplicates are summed after sorting by (row, col, value), so the result
    does not depend on the element order.
    """
    return scatter_rectangular(dofs, dofs, local, shape)


def scatter_rectangular(row_dofs: np.ndarray, col_dofs: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    """Like `scatter_matrix` with different row and column dof maps."""
    n_rows, n_cols = row_dofs.shape[1], col_dofs.shape[1]
    rows = np.repeat(row_dofs, n_cols, axis=1).reshape(-1)
    cols = np.tile(col_dofs, (1, n_rows)).reshape(-1)
    return _sum_triplets(rows, cols, local.reshape(-1), shape)


def _sum_triplets(rows, cols, vals, shape) -> sp.csr_matrix:
    keep = (rows >= 0) & (cols >= 0)
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    if len(vals) == 0:
        return sp.csr_matrix(shape)
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    start = np.concatenate([[True], (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])])
    heads = np.flatnonzero(start)
    sums = np.add.reduceat(vals, heads)
    return sp.csr_matrix((sums, (rows[heads], cols[heads])), shape=shape)


def scatter_vector(dofs: np.ndarray, local: np.ndarray, size: int) -> np.ndarray:
    """Sum element vectors (Nt, n) with a fixed summation order."""
    rows = dofs.reshape(-1)
    vals = local.reshape(-1)
    keep = rows >= 0
    rows, vals = rows[keep], vals[keep]
    order = np.lexsort((vals, rows))
    rows, vals = rows[order], vals[order]
    result = np.zeros(size)
    if len(vals):
        heads = np.flatnonzero(np.concatenate([[True], rows[1:] != rows[:-1]]))
        result[rows[heads]] = np.add.reduceat(vals, heads)
    return result


def assemble_stiffness(mesh: Mesh, space: FeSpace, coeff: Coefficient) -> sp.csr_matrix:
    """
    Global stiffness matrix on the full dof set.

    Constant coefficients on P1 use the closed form; everything else the
    seven-point rule.
    """
    if space.order == 1 and coeff.kind in ("constant", "tensor"):
        local = _closed_form_p1(mesh, coeff)
    else:
        local = local_stiffness(mesh, lagrange_table(space.order), coeff)
    matrix = scatter_matrix(space.dof_of_triangle, local, (space.num_dofs, space.num_dofs))
    logger.debug(f"Assembled P{space.order} stiffness: {space.num_dofs} dofs, {matrix.nnz} nonzeros")
    return matrix


def assemble_load(mesh: Mesh, space: FeSpace, source: ScalarField, table: ShapeTable = None) -> np.ndarray:
    """
    Load vector int f phi_s with the seven-point rule.

    Raises:
        NonFiniteDataError: if f is not finite at a quadrature point
    """
    table = table or lagrange_table(space.order)
    areas, _ = mesh.geometry
    points = to_cartesian(mesh.vertices, mesh.triangles, table.points)
    values = np.asarray(source(points.reshape(-1, 2)), dtype=float)
    values = np.broadcast_to(values, (points.shape[0] * points.shape[1],)).reshape(points.shape[:2])
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteDataError(
            f"source is not finite at ({points[bad[0], bad[1], 0]:.6g}, {points[bad[0], bad[1], 1]:.6g})"
        )
    local = areas[:, None] * np.einsum("q,tq,qi->ti", table.weights, values, table.values)
    return scatter_vector(space.dof_of_triangle, local, space.num_dofs)


def boundary_edge_quadrature(mesh: Mesh, marker: int, order: int, points: int = NEUMANN_EDGE_POINTS):
    """
    Quadrature data on the boundary edges carrying `marker`.

    Returns:
        (triangle ids (B,), local edge (B,), physical points (B, Q, 2),
        weights times edge length (B, Q), basis values (B, Q, n))
    """
    table = mesh.edge_table
    ids = np.flatnonzero(mesh.edge_markers == marker)
    tri = table.triangles_of_edge[ids, 0]
    local = table.local_index[ids, 0]
    rule = gauss_edge(points, split=False)
    bary = edge_points(LOCAL_EDGES, rule.points)[local]  # (B, Q, 3)
    corners = mesh.vertices[mesh.triangles[tri]]
    xy = np.einsum("bqk,bkd->bqd", bary, corners)
    lengths = np.linalg.norm(corners[np.arange(len(tri)), LOCAL_EDGES[local, 1]] - corners[np.arange(len(tri)), LOCAL_EDGES[local, 0]], axis=1)
    values, _ = lagrange_values(order, lattice_nodes(order), bary.reshape(-1, 3))
    values = values.reshape(len(tri), len(rule.points), -1)
    return tri, local, xy, lengths[:, None] * rule.weights[None, :], values


def assemble_neumann(mesh: Mesh, space: FeSpace, flux: Optional[ScalarField]) -> np.ndarray:
    """Boundary load int_E g_N phi_s ds over Neumann edges."""
    if flux is None or not np.any(mesh.boundary_markers == NEUMANN):
        return np.zeros(space.num_dofs)
    tri, _, xy, weights, values = boundary_edge_quadrature(mesh, NEUMANN, space.order)
    g = np.asarray(flux(xy.reshape(-1, 2)), dtype=float).reshape(weights.shape)
    local = np.einsum("bq,bq,bqi->bi", weights, g, values)
    return scatter_vector(space.dof_of_triangle[tri], local, space.num_dofs)


@dataclass(eq=False)
class FieldSolution:
    """Finite element field with the matrices that produced it."""

    space: FeSpace
    values: np.ndarray
    stiffness: Optional[sp.csr_matrix] = None
    load: Optional[np.ndarray] = None
    factor: Optional[SpdFactor] = field(default=None, repr=False)
    coefficient: Optional[Coefficient] = None

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def energy_norm(self) -> float:
        """(u^T K u)^(1/2) over all dofs."""
        return float(np.sqrt(max(self.values @ (self.stiffness @ self.values), 0.0)))

    def free_residual(self) -> np.ndarray:
        free = self.space.free
        return self.load[free] - (self.stiffness @ self.values)[free]

    def evaluate(self, point) -> float:
        return evaluate(self, point)

    def gradients(self, bary: np.ndarray) -> np.ndarray:
        """Gradient (Nt, Q, 2) at reference points (Q, 3) of every element."""
        _, grads = self.mesh.geometry
        _, dlam = lagrange_values(self.space.order, lattice_nodes(self.space.order), bary)
        phys = physical_gradients(dlam, grads)
        return np.einsum("tqid,ti->tqd", phys, self.values[self.space.dof_of_triangle])


def solve_deterministic(problem: DeterministicProblem, mesh: Mesh, order: int = 1) -> FieldSolution:
    """
    Galerkin solution of a deterministic problem.

    Dirichlet dofs are set by interpolating g; the free block is solved by
    the sparse direct solver.
    """
    space = build_space(mesh, order)
    if problem.diffusion.kind == "function":
        table = lagrange_table(order)
        problem.diffusion.check_coercive(to_cartesian(mesh.vertices, mesh.triangles, table.points))
    stiffness = assemble_stiffness(mesh, space, problem.diffusion)
    load = assemble_load(mesh, space, problem.source) + assemble_neumann(mesh, space, problem.neumann)
    values = np.zeros(space.num_dofs)
    values[space.fixed] = problem.dirichlet_values(space.coordinates[space.fixed])
    free = space.free
    k_free = stiffness[free][:, free]
    rhs = load[free] - stiffness[free][:, space.fixed] @ values[space.fixed]
    factor = SpdFactor(k_free)
    values[free] = solve_spd(k_free, rhs, factor)
    logger.debug(f"Solved P{order} system with {len(free)} free dofs")
    return FieldSolution(space, values, stiffness, load, factor, problem.diffusion)


def evaluate(solution: FieldSolution, point) -> float:
    """
    Point value of a finite element field.

    Raises:
        PointLocationError: if the point lies outside the mesh
    """
    triangle, lam = solution.mesh.locate(point)
    order = solution.space.order
    values, _ = lagrange_values(order, lattice_nodes(order), lam[None, :])
    return float(values[0] @ solution.values[solution.space.dof_of_triangle[triangle]])


def evaluate_many(solution: FieldSolution, points: np.ndarray) -> np.ndarray:
    """Vectorized point values at (n, 2) points."""
    triangles, lam = solution.mesh.locate_many(points)
    order = solution.space.order
    values, _ = lagrange_values(order, lattice_nodes(order), lam)
    return np.einsum("ni,ni->n", values, solution.values[solution.space.dof_of_triangle[triangles]])


def prolongate(solution: FieldSolution, fine_space: FeSpace) -> np.ndarray:
    """
    Interpolate a coarse field at the dofs of a refined space.

    Raises:
        NonNestedMeshError: if the coarse vertices are not a prefix of the fine ones
    """
    coarse = solution.mesh
    fine = fine_space.mesh
    if fine.num_vertices < coarse.num_vertices or not np.array_equal(
        fine.vertices[: coarse.num_vertices], coarse.vertices
    ):
        raise NonNestedMeshError("coarse mesh vertices are not a prefix of the fine mesh")
    return evaluate_many(solution, fine_space.coordinates)


def energy_error(sol_fine: FieldSolution, sol_coarse: FieldSolution, coeff: Optional[Coefficient] = None) -> float:
    """
    Energy norm of the difference between a fine solution and a prolonged coarse one.

    Args:
        sol_fine: solution on a refinement of sol_coarse's mesh
        sol_coarse: coarse solution
        coeff: coefficient of the energy norm (default: the fine solution's)
    """
    error = prolongate(sol_coarse, sol_fine.space) - sol_fine.values
    if coeff is None or coeff is sol_fine.coefficient:
        stiffness = sol_fine.stiffness
    else:
        stiffness = assemble_stiffness(sol_fine.mesh, sol_fine.space, coeff)
    return float(np.sqrt(max(error @ (stiffness @ error), 0.0)))


def dump_solution(solution: FieldSolution, path: Union[str, Path]) -> None:
    """Write "dofs N" then one "x y value" line per dof (17 significant digits)."""
    lines = [f"dofs {solution.space.num_dofs}"]
    lines += [
        f"{x:.17g} {y:.17g} {value:.17g}"
        for (x, y), value in zip(solution.space.coordinates, solution.values)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def export_vtk(solution: FieldSolution, path: Union[str, Path], name: str = "u") -> None:
    """Legacy ASCII VTK file with the vertex values as point data."""
    mesh = solution.mesh
    values = solution.values[: mesh.num_vertices]
    lines = [
        "# vtk DataFile Version 3.0",
        "tifiss solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.num_triangles}")
    lines += ["5"] * mesh.num_triangles
    lines += [f"POINT_DATA {mesh.num_vertices}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{value:.17g}" for value in values]
    Path(path).write_text("\n".join(lines) + "\n")
