"""
Triangulations, structured generators and conforming bisection refinement.

Triangles are stored counterclockwise with the reference edge between local
vertices 0 and 1 (local edge 2, opposite vertex 2). Local edge k is the edge
opposite local vertex k.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .basis import LOCAL_EDGES, barycentric, element_geometry
from .errors import (
    InvalidEdgeError,
    MeshError,
    PointLocationError,
    UnsupportedDomainError,
)

logger = logging.getLogger(__name__)

DIRICHLET = 1
NEUMANN = 2

LENGTH_TIE_TOL = 1e-12  # relative tolerance when comparing edge lengths
LOCATE_TOL = 1e-12  # barycentric slack when testing point inclusion


@dataclass(frozen=True)
class DomainKind:
    """
    Computational domain.

    tag is one of "square" (-1,1)^2, "lshape" (-1,1)^2 minus (-1,0]^2 and
    "slit", the square minus the thin triangle conv{(0,0), (-1,d), (-1,-d)}.
    """

    tag: str
    delta: float = 0.0

    def __post_init__(self):
        if self.tag not in ("square", "lshape", "slit"):
            raise UnsupportedDomainError(f"unsupported domain '{self.tag}'")
        if self.tag == "slit" and not 0.0 < self.delta < 1.0:
            raise UnsupportedDomainError(f"slit half-width must lie in (0, 1), got {self.delta}")

    @classmethod
    def square(cls) -> "DomainKind":
        return cls("square")

    @classmethod
    def lshape(cls) -> "DomainKind":
        return cls("lshape")

    @classmethod
    def slit(cls, delta: float) -> "DomainKind":
        return cls("slit", delta)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-domain membership test for (n, 2) points."""
        x, y = points[:, 0], points[:, 1]
        inside = (np.abs(x) <= 1.0) & (np.abs(y) <= 1.0)
        if self.tag == "lshape":
            inside &= ~((x < 0.0) & (y < 0.0))
        elif self.tag == "slit":
            inside &= ~((x < 0.0) & (np.abs(y) < -self.delta * x))
        return inside


@dataclass(frozen=True)
class EdgeTable:
    """
    Edges of a triangulation and their incidence.

    Attributes:
        edges: (Ne, 2) vertex pairs, smaller id first, lexicographically sorted
        edge_of_triangle: (Nt, 3) edge id of each local edge
        triangles_of_edge: (Ne, 2) adjacent triangles, -1 for a missing second one
        local_index: (Ne, 2) local edge number inside each adjacent triangle
    """

    edges: np.ndarray
    edge_of_triangle: np.ndarray
    triangles_of_edge: np.ndarray
    local_index: np.ndarray

    @property
    def count(self) -> int:
        return len(self.edges)

    @property
    def interior(self) -> np.ndarray:
        return self.triangles_of_edge[:, 1] >= 0

    def keys(self, num_vertices: int) -> np.ndarray:
        return self.edges[:, 0].astype(np.int64) * num_vertices + self.edges[:, 1]

    def lookup(self, pairs: np.ndarray, num_vertices: int) -> np.ndarray:
        """Edge ids of (n, 2) vertex pairs given in any orientation."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        wanted = pairs[:, 0] * num_vertices + pairs[:, 1]
        keys = self.keys(num_vertices)
        ids = np.searchsorted(keys, wanted)
        ids = np.minimum(ids, len(keys) - 1)
        if np.any(keys[ids] != wanted):
            raise MeshError("vertex pair is not an edge of the mesh")
        return ids


def build_edge_table(triangles: np.ndarray) -> EdgeTable:
    """Vectorized edge table construction."""
    nt = len(triangles)
    pairs = np.sort(triangles[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    counts = np.bincount(inverse, minlength=len(edges))
    if counts.max(initial=0) > 2:
        bad = int(np.argmax(counts))
        raise MeshError(f"edge {tuple(edges[bad])} is shared by {counts[bad]} triangles")
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    second = counts == 2
    triangles_of_edge = np.full((len(edges), 2), -1, dtype=np.int64)
    local_index = np.full((len(edges), 2), -1, dtype=np.int64)
    triangles_of_edge[:, 0] = order[starts] // 3
    local_index[:, 0] = order[starts] % 3
    triangles_of_edge[second, 1] = order[starts[second] + 1] // 3
    local_index[second, 1] = order[starts[second] + 1] % 3
    return EdgeTable(
        edges=edges.astype(np.int64),
        edge_of_triangle=inverse.reshape(nt, 3),
        triangles_of_edge=triangles_of_edge,
        local_index=local_index,
    )


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Immutable conforming triangulation.

    Attributes:
        vertices: (Nv, 2) coordinates
        triangles: (Nt, 3) counterclockwise vertex ids, reference edge (v0, v1)
        boundary_edges: (B, 2) boundary vertex pairs, domain on the left
        boundary_markers: (B,) DIRICHLET or NEUMANN
        generation: number of refinement steps since generation
        vertex_parents: (Nv, 2) endpoints of the bisected edge, (-1, -1) for coarse vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    generation: int = 0
    vertex_parents: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.vertex_parents is None:
            object.__setattr__(
                self, "vertex_parents", np.full((len(self.vertices), 2), -1, dtype=np.int64)
            )
        for name in ("vertices", "triangles", "boundary_edges", "boundary_markers", "vertex_parents"):
            getattr(self, name).setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def edge_table(self) -> EdgeTable:
        return build_edge_table(self.triangles)

    @cached_property
    def geometry(self) -> Tuple[np.ndarray, np.ndarray]:
        """Element areas and barycentric gradients."""
        return element_geometry(self.vertices, self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return self.geometry[0]

    @cached_property
    def edge_markers(self) -> np.ndarray:
        """(Ne,) marker per edge, 0 for interior edges."""
        markers = np.zeros(self.edge_table.count, dtype=np.int64)
        if len(self.boundary_edges):
            ids = self.edge_table.lookup(self.boundary_edges, self.num_vertices)
            markers[ids] = self.boundary_markers
        return markers

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def edge_lengths(self) -> np.ndarray:
        edges = self.edge_table.edges
        return np.linalg.norm(self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]], axis=1)

    def with_markers(self, predicate: Callable[[np.ndarray], np.ndarray], marker: int) -> "Mesh":
        """
        Re-mark boundary edges whose midpoint satisfies `predicate`.

        Args:
            predicate: maps (B, 2) midpoints to a boolean mask
            marker: DIRICHLET or NEUMANN
        """
        if marker not in (DIRICHLET, NEUMANN):
            raise MeshError(f"unknown boundary marker {marker}")
        midpoints = self.vertices[self.boundary_edges].mean(axis=1)
        mask = np.asarray(predicate(midpoints), dtype=bool)
        markers = np.array(self.boundary_markers)
        markers[mask] = marker
        return replace(self, boundary_markers=markers)

    def locate(self, point) -> Tuple[int, np.ndarray]:
        """
        Find a triangle containing `point`.

        Walks from the triangle with the nearest centroid towards the point,
        crossing the edge opposite the most negative barycentric coordinate,
        and falls back to a full scan when the walk leaves the mesh.

        Returns:
            (triangle id, barycentric coordinates)

        Raises:
            PointLocationError: if no triangle contains the point
        """
        point = np.asarray(point, dtype=float)
        table = self.edge_table
        _, current = self._centroid_tree.query(point)
        current = int(current)
        visited = set()
        while current not in visited:
            visited.add(current)
            lam = barycentric(self.vertices[self.triangles[current]], point)
            k = int(np.argmin(lam))
            if lam[k] >= -LOCATE_TOL:
                return current, lam
            edge = table.edge_of_triangle[current, k]
            pair = table.triangles_of_edge[edge]
            neighbor = pair[1] if pair[0] == current else pair[0]
            if neighbor < 0:
                break
            current = int(neighbor)
        return self._scan(point)

    def locate_many(self, points: np.ndarray, candidates: int = 12) -> Tuple[np.ndarray, np.ndarray]:
        """
        Vectorized location of many points.

        Tests the triangles with the nearest centroids first; points missed
        by every candidate go through `locate`.

        Returns:
            (triangle ids (n,), barycentric coordinates (n, 3))
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        k = min(candidates, self.num_triangles)
        _, near = self._centroid_tree.query(points, k=k)
        near = np.asarray(near).reshape(len(points), k)
        _, grads = self.geometry
        origin = self.vertices[self.triangles[near, 0]]  # (n, k, 2)
        lam12 = np.einsum("nkjd,nkd->nkj", grads[near][:, :, 1:], points[:, None, :] - origin)
        lam = np.concatenate([1.0 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)
        inside = lam.min(axis=2) >= -LOCATE_TOL
        first = np.argmax(inside, axis=1)
        rows = np.arange(len(points))
        triangles = near[rows, first].astype(np.int64)
        bary = lam[rows, first]
        for row in np.flatnonzero(~inside.any(axis=1)):
            triangles[row], bary[row] = self.locate(points[row])
        return triangles, bary

    def _scan(self, point: np.ndarray) -> Tuple[int, np.ndarray]:
        areas, grads = self.geometry
        offsets = point[None, :] - self.vertices[self.triangles[:, 0]]
        lam12 = np.einsum("tkd,td->tk", grads[:, 1:], offsets)
        lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
        hits = np.flatnonzero(lam.min(axis=1) >= -LOCATE_TOL)
        if len(hits) == 0:
            raise PointLocationError(f"point ({point[0]}, {point[1]}) lies outside the mesh")
        return int(hits[0]), lam[hits[0]]


def orient_longest_edge(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Rotate every triangle so that a longest edge becomes its reference edge.

    Ties go to the edge whose sorted vertex pair is lexicographically smallest.
    Rotation keeps the counterclockwise orientation.
    """
    nv = len(vertices)
    pairs = triangles[:, LOCAL_EDGES]  # (Nt, 3, 2)
    vec = vertices[pairs[:, :, 1]] - vertices[pairs[:, :, 0]]
    length2 = np.sum(vec**2, axis=2)
    longest = length2.max(axis=1, keepdims=True)
    candidate = length2 >= longest * (1.0 - LENGTH_TIE_TOL)
    sorted_pairs = np.sort(pairs, axis=2).astype(np.int64)
    keys = sorted_pairs[:, :, 0] * nv + sorted_pairs[:, :, 1]
    keys = np.where(candidate, keys, np.iinfo(np.int64).max)
    k = np.argmin(keys, axis=1)  # local edge k is opposite vertex k
    rows = np.arange(len(triangles))
    return np.column_stack(
        [triangles[rows, (k + 1) % 3], triangles[rows, (k + 2) % 3], triangles[rows, k]]
    )


def boundary_from_triangles(triangles: np.ndarray, marker: int = DIRICHLET) -> Tuple[np.ndarray, np.ndarray]:
    """Single-sided edges in triangle orientation, all carrying `marker`."""
    table = build_edge_table(triangles)
    ids = np.flatnonzero(table.triangles_of_edge[:, 1] < 0)
    tri = table.triangles_of_edge[ids, 0]
    local = table.local_index[ids, 0]
    edges = np.column_stack(
        [triangles[tri, LOCAL_EDGES[local, 0]], triangles[tri, LOCAL_EDGES[local, 1]]]
    )
    return edges, np.full(len(edges), marker, dtype=np.int64)


def generate_structured(domain: DomainKind, level: int) -> Mesh:
    """
    Uniform right-angled mesh of a supported domain.

    The domain is covered by a grid of 2 * 2^level squares per side, each
    split along the diagonal pointing towards the origin. The square has
    8 * 4^level triangles, the L-shape 6 * 4^level (level 2 gives 96).

    Args:
        domain: target domain
        level: nonnegative grid level

    Returns:
        Mesh with every boundary edge marked Dirichlet
    """
    if level < 0:
        raise MeshError(f"level must be nonnegative, got {level}")
    if not isinstance(domain, DomainKind):
        raise UnsupportedDomainError(f"unsupported domain {domain!r}")
    n = 2 * 2**level
    coords = np.linspace(-1.0, 1.0, n + 1)
    gx, gy = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    cx, cy = coords[i] + 1.0 / n, coords[j] + 1.0 / n
    keep = np.ones(len(i), dtype=bool)
    if domain.tag == "lshape":
        keep = ~((cx < 0.0) & (cy < 0.0))
    i, j, cx, cy = i[keep], j[keep], cx[keep], cy[keep]
    p00 = j * (n + 1) + i
    p10, p01, p11 = p00 + 1, p00 + n + 1, p00 + n + 2
    up = cx * cy > 0.0  # diagonal of slope +1
    first = np.where(up[:, None], np.column_stack([p00, p10, p11]), np.column_stack([p00, p10, p01]))
    second = np.where(up[:, None], np.column_stack([p00, p11, p01]), np.column_stack([p10, p11, p01]))
    triangles = np.stack([first, second], axis=1).reshape(-1, 3)

    used, triangles = np.unique(triangles, return_inverse=True)
    triangles = triangles.reshape(-1, 3)
    vertices = vertices[used]
    if domain.tag == "slit":
        vertices, triangles = _open_slit(vertices, triangles, domain.delta)
    triangles = orient_longest_edge(vertices, triangles)
    boundary, markers = boundary_from_triangles(triangles)
    mesh = Mesh(vertices, triangles, boundary, markers)
    logger.debug(
        f"Generated {domain.tag} mesh level {level}: "
        f"{mesh.num_triangles} triangles, {mesh.num_vertices} vertices"
    )
    return mesh


def _open_slit(vertices: np.ndarray, triangles: np.ndarray, delta: float):
    """Split the vertices on {x < 0, y = 0} into the two faces of the notch."""
    on_slit = np.flatnonzero((vertices[:, 0] < 0.0) & (np.abs(vertices[:, 1]) < 1e-14))
    lower_ids = len(vertices) + np.arange(len(on_slit))
    x = vertices[on_slit, 0]
    vertices = np.vstack([vertices, np.column_stack([x, delta * x])])
    vertices[on_slit, 1] = -delta * x
    remap = np.arange(len(vertices))
    remap[on_slit] = lower_ids
    below = vertices[triangles, 1].mean(axis=1) < 0.0
    triangles = triangles.copy()
    triangles[below] = remap[triangles[below]]
    return vertices, triangles


def _bisect(a, b, c, m):
    """Children of (a, b, c) bisected at the midpoint m of (a, b)."""
    return (c, a, m), (b, c, m)


def refine_leb(mesh: Mesh, marked_edges: Iterable[int]) -> Tuple[Mesh, np.ndarray]:
    """
    Conforming bisection refinement of the marked edges.

    The closure marks the reference edge of every triangle with a marked
    edge until the set is stable; each triangle is then split by one, two
    or three bisections. Children take the edge opposite the new vertex as
    reference edge.

    Args:
        mesh: mesh to refine
        marked_edges: edge ids of mesh.edge_table

    Returns:
        (refined mesh, parent_map) with parent_map[child] = parent triangle

    Raises:
        InvalidEdgeError: if an id is outside the edge table
    """
    table = mesh.edge_table
    marked = np.unique(np.fromiter((int(e) for e in marked_edges), dtype=np.int64))
    if marked.size == 0:
        return mesh, np.arange(mesh.num_triangles)
    if marked[0] < 0 or marked[-1] >= table.count:
        bad = marked[0] if marked[0] < 0 else marked[-1]
        raise InvalidEdgeError(f"edge id {bad} is not in [0, {table.count})")

    flag = np.zeros(table.count, dtype=bool)
    flag[marked] = True
    e2t = table.edge_of_triangle
    sweeps = 0
    while True:
        need = flag[e2t].any(axis=1) & ~flag[e2t[:, 2]]
        if not need.any():
            break
        flag[e2t[need, 2]] = True
        sweeps += 1
    logger.debug(f"Closure added reference edges in {sweeps} sweeps")

    nv = mesh.num_vertices
    bisected = np.flatnonzero(flag)
    midpoint = np.full(table.count, -1, dtype=np.int64)
    midpoint[bisected] = nv + np.arange(len(bisected))
    edges = table.edges[bisected]
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    parents = np.vstack([mesh.vertex_parents, edges])

    tri = mesh.triangles
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    m0, m1, m2 = (midpoint[e2t[:, k]] for k in range(3))
    has = flag[e2t]
    ref_only = has[:, 2] & ~has[:, 0] & ~has[:, 1]
    with_e1 = has[:, 2] & has[:, 1] & ~has[:, 0]
    with_e0 = has[:, 2] & has[:, 0] & ~has[:, 1]
    all_three = has[:, 2] & has[:, 0] & has[:, 1]
    untouched = ~has[:, 2]

    children, parent_ids, slots = [], [], []

    def emit(mask, *kids):
        ids = np.flatnonzero(mask)
        for slot, kid in enumerate(kids):
            children.append(np.column_stack([part[ids] for part in kid]))
            parent_ids.append(ids)
            slots.append(np.full(len(ids), slot))

    left, right = _bisect(v0, v1, v2, m2)
    emit(untouched, (v0, v1, v2))
    emit(ref_only, left, right)
    emit(with_e1, *_bisect(*left, m1), right)
    emit(with_e0, left, *_bisect(*right, m0))
    emit(all_three, *_bisect(*left, m1), *_bisect(*right, m0))

    parent_map = np.concatenate(parent_ids)
    slot = np.concatenate(slots)
    order = np.lexsort((slot, parent_map))
    triangles = np.vstack(children)[order]
    parent_map = parent_map[order]

    boundary, markers = _split_boundary(mesh, midpoint)
    refined = Mesh(vertices, triangles, boundary, markers, mesh.generation + 1, parents)
    logger.debug(
        f"Refined {len(marked)} marked edges: {mesh.num_triangles} -> "
        f"{refined.num_triangles} triangles"
    )
    return refined, parent_map


def _split_boundary(mesh: Mesh, midpoint: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Replace every bisected boundary edge by its two halves, keeping markers."""
    if len(mesh.boundary_edges) == 0:
        return mesh.boundary_edges, mesh.boundary_markers
    ids = mesh.edge_table.lookup(mesh.boundary_edges, mesh.num_vertices)
    mid = midpoint[ids]
    split = mid >= 0
    a, b = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    first = np.column_stack([a, np.where(split, mid, b)])
    second = np.column_stack([mid, b])
    stacked = np.stack([first, second], axis=1).reshape(-1, 2)
    keep = np.stack([np.ones_like(split), split], axis=1).reshape(-1)
    markers = np.repeat(mesh.boundary_markers, 2)
    return stacked[keep], markers[keep]


def refine_red(mesh: Mesh) -> Tuple[Mesh, np.ndarray]:
    """
    Red refinement: every triangle is split through its three edge midpoints.

    New vertices are numbered after the input vertices in edge-table order.
    Children take their longest edge as reference edge.
    """
    table = mesh.edge_table
    nv = mesh.num_vertices
    midpoint = nv + np.arange(table.count)
    edges = table.edges
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    parents = np.vstack([mesh.vertex_parents, edges])
    v0, v1, v2 = mesh.triangles.T
    m0, m1, m2 = (midpoint[table.edge_of_triangle[:, k]] for k in range(3))
    kids = np.stack(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)
    triangles = orient_longest_edge(vertices, kids)
    parent_map = np.repeat(np.arange(mesh.num_triangles), 4)
    boundary, markers = _split_boundary(mesh, midpoint)
    return Mesh(vertices, triangles, boundary, markers, mesh.generation + 1, parents), parent_map


def uniform_refine(mesh: Mesh, mode: str = "bisec3") -> Mesh:
    """Refine every triangle into four, by three bisections or red refinement."""
    if mode == "bisec3":
        return refine_leb(mesh, range(mesh.edge_table.count))[0]
    if mode == "red":
        return refine_red(mesh)[0]
    raise MeshError(f"unknown uniform refinement mode '{mode}'")


def check_conforming(mesh: Mesh) -> None:
    """
    Verify the structural invariants of a mesh.

    Raises:
        MeshError: on an edge shared by more than two triangles, a
            single-sided edge without a boundary marker, a marked edge that
            is not single-sided, or a non-positive element area
    """
    element_geometry(mesh.vertices, mesh.triangles)
    table = mesh.edge_table
    single = ~table.interior
    markers = mesh.edge_markers
    if np.any(single & (markers == 0)):
        edge = table.edges[np.flatnonzero(single & (markers == 0))[0]]
        raise MeshError(f"edge {tuple(edge)} has one triangle but no boundary marker")
    if np.any(~single & (markers != 0)):
        edge = table.edges[np.flatnonzero(~single & (markers != 0))[0]]
        raise MeshError(f"interior edge {tuple(edge)} carries a boundary marker")
    if len(mesh.boundary_edges) != int(single.sum()):
        raise MeshError("boundary edge list contains duplicates")


def dump_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    """
    Write the text mesh format.

    Header "vertices N triangles M", then N lines "x y", M lines
    "v0 v1 v2 refedge" (0-based ids, reference edge as local edge number)
    and one line "v0 v1 marker" per boundary edge.
    """
    lines = [f"vertices {mesh.num_vertices} triangles {mesh.num_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c} 2" for a, b, c in mesh.triangles]
    lines += [f"{a} {b} {m}" for (a, b), m in zip(mesh.boundary_edges, mesh.boundary_markers)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: Union[str, Path]) -> Mesh:
    """Read a mesh written by `dump_mesh`."""
    rows = Path(path).read_text().split("\n")
    header = rows[0].split()
    if len(header) != 4 or header[0] != "vertices" or header[2] != "triangles":
        raise MeshError(f"bad mesh header '{rows[0]}'")
    nv, nt = int(header[1]), int(header[3])
    vertices = np.array([[float(v) for v in row.split()] for row in rows[1 : nv + 1]]).reshape(-1, 2)
    raw = np.array([[int(v) for v in row.split()] for row in rows[nv + 1 : nv + nt + 1]], dtype=np.int64).reshape(-1, 4)
    # rotate so the stored reference edge becomes local edge 2
    shift = (raw[:, 3] + 1) % 3
    rows_idx = np.arange(len(raw))
    triangles = np.column_stack([raw[rows_idx, (shift + s) % 3] for s in range(3)])
    tail = [row for row in rows[nv + nt + 1 :] if row.strip()]
    boundary = np.array([[int(v) for v in row.split()] for row in tail], dtype=np.int64).reshape(-1, 3)
    return Mesh(vertices, triangles, boundary[:, :2], boundary[:, 2])
