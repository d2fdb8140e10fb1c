"""
Tests for structured meshes, bisection refinement and point location.
"""

import numpy as np
import pytest

from src.errors import InvalidEdgeError, MeshError, PointLocationError, UnsupportedDomainError
from src.mesh import (
    DIRICHLET,
    NEUMANN,
    DomainKind,
    check_conforming,
    dump_mesh,
    generate_structured,
    load_mesh,
    refine_leb,
    refine_red,
    uniform_refine,
)


@pytest.fixture
def square():
    return generate_structured(DomainKind.square(), 0)


def side_ratios(mesh):
    """Sorted side lengths of each triangle divided by its longest side."""
    corners = mesh.vertices[mesh.triangles]
    sides = np.linalg.norm(corners - np.roll(corners, 1, axis=1), axis=2)
    sides.sort(axis=1)
    return sides / sides[:, -1:]


def shapes(mesh):
    return {tuple(row) for row in np.round(side_ratios(mesh), 8)}


def triangle_set(mesh):
    corners = np.round(mesh.vertices[mesh.triangles], 10)
    return {tuple(sorted(map(tuple, tri))) for tri in corners}


class TestDomainKind:
    """Tests for domain tags."""

    def test_unknown_tag(self):
        """Unsupported tags are rejected."""
        with pytest.raises(UnsupportedDomainError):
            DomainKind("disk")

    def test_slit_width_range(self):
        """Slit half-width must lie in (0, 1)."""
        with pytest.raises(UnsupportedDomainError):
            DomainKind.slit(0.0)

    def test_lshape_membership(self):
        """The removed quadrant is outside the L-shape."""
        inside = DomainKind.lshape().contains(np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5]]))
        assert inside.tolist() == [False, True, True]


class TestGenerateStructured:
    """Tests for the uniform generators."""

    @pytest.mark.parametrize("level,count", [(0, 8), (1, 32), (2, 128)])
    def test_square_sizes(self, level, count):
        """Square level L has 8 * 4^L triangles."""
        mesh = generate_structured(DomainKind.square(), level)
        assert mesh.num_triangles == count
        assert np.isclose(mesh.areas.sum(), 4.0)

    def test_lshape_level_two(self):
        """L-shape level 2 gives the 96-triangle mesh."""
        mesh = generate_structured(DomainKind.lshape(), 2)
        assert mesh.num_triangles == 96
        assert np.isclose(mesh.areas.sum(), 3.0)
        assert not np.any((mesh.centroids[:, 0] < 0) & (mesh.centroids[:, 1] < 0))

    def test_slit_area(self):
        """The slit removes a triangle of area delta."""
        mesh = generate_structured(DomainKind.slit(0.005), 1)
        check_conforming(mesh)
        assert np.isclose(mesh.areas.sum(), 4.0 - 0.005)

    def test_edge_table_counts(self, square):
        """Euler relation and boundary edge count on the coarse square."""
        table = square.edge_table
        assert square.num_vertices == 9
        assert table.count == square.num_vertices + square.num_triangles - 1
        assert int((~table.interior).sum()) == 8
        assert np.all(square.edge_markers[~table.interior] == DIRICHLET)

    def test_reference_edge_is_longest(self):
        """Local edge 2 is a longest edge of every triangle."""
        mesh = generate_structured(DomainKind.lshape(), 1)
        p = mesh.vertices[mesh.triangles]
        lengths = np.linalg.norm(p[:, [2, 0, 1]] - p[:, [1, 2, 0]], axis=2)
        assert np.all(lengths[:, 2] >= lengths.max(axis=1) - 1e-12)

    def test_negative_level(self):
        """Negative levels are rejected."""
        with pytest.raises(MeshError):
            generate_structured(DomainKind.square(), -1)


class TestRefinement:
    """Tests for conforming bisection."""

    def test_empty_marking_is_identity(self, square):
        """No marked edges returns the same mesh."""
        refined, parents = refine_leb(square, [])
        assert refined is square
        assert parents.tolist() == list(range(square.num_triangles))

    def test_invalid_edge(self, square):
        """Edge ids outside the table raise."""
        with pytest.raises(InvalidEdgeError):
            refine_leb(square, [square.edge_table.count])

    def test_single_edge_stays_conforming(self, square):
        """Closure keeps the mesh conforming and the area unchanged."""
        refined, parents = refine_leb(square, [0])
        check_conforming(refined)
        assert refined.num_triangles > square.num_triangles
        assert np.isclose(refined.areas.sum(), 4.0)
        assert np.allclose(np.bincount(parents, weights=refined.areas), square.areas)

    def test_marked_edge_is_bisected(self, square):
        """The midpoint of a marked edge becomes a vertex."""
        edge = square.edge_table.edges[5]
        refined, _ = refine_leb(square, [5])
        midpoint = square.vertices[edge].mean(axis=0)
        assert np.any(np.all(np.isclose(refined.vertices, midpoint), axis=1))

    def test_vertex_parents(self, square):
        """New vertices record the endpoints of their bisected edge."""
        refined, _ = refine_leb(square, range(square.edge_table.count))
        new = np.arange(square.num_vertices, refined.num_vertices)
        parents = refined.vertex_parents[new]
        assert np.allclose(refined.vertices[new], refined.vertices[parents].mean(axis=1))
        assert np.all(refined.vertex_parents[: square.num_vertices] == -1)

    def test_uniform_refine_quadruples(self, square):
        """Both uniform modes give four children per triangle."""
        assert uniform_refine(square).num_triangles == 32
        assert uniform_refine(square, "red").num_triangles == 32
        with pytest.raises(MeshError):
            uniform_refine(square, "green")

    def test_markers_survive_refinement(self, square):
        """Boundary halves inherit the Neumann marker."""
        marked = square.with_markers(lambda mid: np.isclose(mid[:, 0], 1.0), NEUMANN)
        assert int((marked.boundary_markers == NEUMANN).sum()) == 2
        refined, _ = refine_red(marked)
        check_conforming(refined)
        assert int((refined.boundary_markers == NEUMANN).sum()) == 4

    def test_vertices_are_prefix(self, square):
        """Refinement appends vertices after the coarse ones."""
        refined, _ = refine_leb(square, [1, 2, 3])
        assert np.array_equal(refined.vertices[: square.num_vertices], square.vertices)

    def test_random_rounds_stay_nested(self):
        """Ten rounds of random marking keep the mesh conforming and nested."""
        rng = np.random.default_rng(2024)
        mesh = generate_structured(DomainKind.square(), 1)
        for _ in range(10):
            count = max(1, mesh.edge_table.count // 5)
            marked = rng.choice(mesh.edge_table.count, size=count, replace=False)
            refined, parents = refine_leb(mesh, marked)
            check_conforming(refined)
            assert np.array_equal(refined.vertices[: mesh.num_vertices], mesh.vertices)
            assert np.allclose(np.bincount(parents, weights=refined.areas), mesh.areas)
            midpoints = mesh.vertices[mesh.edge_table.edges[marked]].mean(axis=1)
            for point in midpoints:
                assert np.any(np.all(np.isclose(refined.vertices, point), axis=1))
            mesh = refined
        assert np.isclose(mesh.areas.sum(), 4.0)

    def test_bisection_shape_classes(self):
        """Repeated bisection on the L-shape produces at most four triangle shapes."""
        rng = np.random.default_rng(99)
        mesh = generate_structured(DomainKind.lshape(), 1)
        for _ in range(6):
            count = max(1, mesh.edge_table.count // 4)
            mesh, _ = refine_leb(mesh, rng.choice(mesh.edge_table.count, size=count, replace=False))
        assert len(shapes(mesh)) <= 4

    def test_red_children_similar(self, square):
        """Red children have the shape of their parent."""
        refined, parents = refine_red(square)
        child = side_ratios(refined)
        parent = side_ratios(square)[parents]
        assert np.allclose(child, parent)

    @pytest.mark.parametrize("domain", [DomainKind.square(), DomainKind.lshape()])
    def test_two_red_steps_match_structured(self, domain):
        """Two red refinements of level 0 give the level 2 structured mesh."""
        twice = uniform_refine(uniform_refine(generate_structured(domain, 0), "red"), "red")
        assert triangle_set(twice) == triangle_set(generate_structured(domain, 2))


class TestLocate:
    """Tests for point location."""

    def test_locate_inside(self):
        """Barycentrics of the located triangle reproduce the point."""
        mesh = generate_structured(DomainKind.square(), 2)
        point = np.array([0.3, 0.2])
        triangle, lam = mesh.locate(point)
        assert lam.min() >= -1e-12
        assert np.allclose(lam @ mesh.vertices[mesh.triangles[triangle]], point)

    def test_locate_many_matches(self):
        """Vectorized location agrees with single queries."""
        mesh = generate_structured(DomainKind.lshape(), 2)
        rng = np.random.default_rng(7)
        points = rng.uniform(0.0, 1.0, size=(40, 2))
        triangles, bary = mesh.locate_many(points)
        for point, triangle, lam in zip(points, triangles, bary):
            assert np.allclose(lam @ mesh.vertices[mesh.triangles[triangle]], point)

    def test_outside_point(self, square):
        """Points outside the domain raise."""
        with pytest.raises(PointLocationError):
            square.locate((2.0, 2.0))


class TestMeshFile:
    """Tests for the text mesh format."""

    def test_dump_and_load(self, tmp_path):
        """A dumped mesh reads back unchanged."""
        mesh = generate_structured(DomainKind.lshape(), 1)
        path = tmp_path / "mesh.txt"
        dump_mesh(mesh, path)
        assert path.read_text().startswith(f"vertices {mesh.num_vertices} triangles {mesh.num_triangles}")
        loaded = load_mesh(path)
        assert np.array_equal(loaded.vertices, mesh.vertices)
        assert np.array_equal(loaded.triangles, mesh.triangles)
        assert np.array_equal(loaded.boundary_markers, mesh.boundary_markers)

    def test_bad_header(self, tmp_path):
        """Malformed headers raise MeshError."""
        path = tmp_path / "mesh.txt"
        path.write_text("nodes 3\n")
        with pytest.raises(MeshError):
            load_mesh(path)
