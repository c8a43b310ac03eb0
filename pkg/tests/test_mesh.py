import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cr_transport.errors import MeshError, NonConvexRing
from cr_transport.mesh import (
    BOUNDARY_VERTEX,
    INTERIOR_VERTEX,
    MIDPOINT,
    HalfMesh,
    TriMesh,
    build_uniform_mesh,
    read_mesh,
    refine_half,
    ring_polygon,
    write_mesh,
)


def test_single_square():
    m = build_uniform_mesh((0, 1, 0, 1), 1)
    assert (m.n_vertices, m.n_cells, m.n_edges) == (4, 2, 5)
    assert m.boundary.sum() == 4


def test_two_by_two_counts():
    m = build_uniform_mesh((0, 1, 0, 1), 2)
    assert (m.n_vertices, m.n_cells, m.n_edges) == (9, 8, 16)
    # Euler characteristic of a disc
    assert m.n_vertices - m.n_edges + m.n_cells == 1


@pytest.mark.parametrize("n", range(1, 17))
def test_edge_count_identity(n):
    m = build_uniform_mesh((0, 1, 0, 1), n)
    assert m.n_edges == 3 * n * n + 2 * n
    assert m.n_vertices == (n + 1) ** 2
    assert m.n_cells == 2 * n * n


def test_diagonal_runs_sw_ne():
    m = build_uniform_mesh((0, 1, 0, 1), 1)
    diag = m.edges[~m.boundary][0]
    pts = m.vertices[diag]
    assert {tuple(p) for p in pts} == {(0.0, 0.0), (1.0, 1.0)}


def test_mesh_size_parameter():
    m = build_uniform_mesh((-1, 1, -1, 1), 20)
    # circumdiameter of a right triangle is its hypotenuse
    assert m.h == pytest.approx(0.1 * np.sqrt(2.0), rel=1e-13)


def test_invalid_input():
    with pytest.raises(MeshError):
        build_uniform_mesh((0, 1, 0, 1), 0)
    with pytest.raises(MeshError):
        build_uniform_mesh((0, 0, 0, 1), 3)
    with pytest.raises(MeshError):
        TriMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(MeshError):
        TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 5]])


def test_clockwise_cells_are_reoriented():
    m = TriMesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])
    assert m.areas[0] == pytest.approx(0.5)
    assert list(m.cells[0]) == [0, 2, 1]


def test_edge_adjacency_and_normals(unit_mesh):
    m = unit_mesh
    interior = ~m.boundary
    assert np.all(m.edge_cells[interior] >= 0)
    assert np.all(m.edge_cells[m.boundary, 1] == -1)
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-14, rtol=0)
    cen = m.vertices[m.cells].mean(axis=1)
    d0 = np.einsum("ij,ij->i", cen[m.edge_cells[:, 0]] - m.midpoints, m.normals)
    assert np.all(d0 < 0)
    d1 = np.einsum("ij,ij->i", cen[m.edge_cells[interior, 1]] - m.midpoints[interior],
                   m.normals[interior])
    assert np.all(d1 > 0)
    assert np.all(m.areas > 0)


def test_cell_edges_opposite_vertices(unit_mesh):
    m = unit_mesh
    for c in range(m.n_cells):
        for k in range(3):
            e = m.edges[m.cell_edges[c, k]]
            assert m.cells[c, k] not in e


@pytest.mark.parametrize("n", [1, 3, 6])
def test_support_graph(n):
    m = build_uniform_mesh((0, 2, 0, 1), n)
    nb = m.neighbors
    assert (nb != nb.T).nnz == 0
    sizes = np.diff(nb.indptr)
    assert sizes.max() <= 6
    assert set(sizes[~m.boundary]) <= {5, 6}
    for i in range(m.n_edges):
        assert i in m.neighbor_list(i)


def test_coupling_contains_support(unit_mesh):
    m = unit_mesh
    nb, cp = m.neighbors, m.coupling
    assert (cp != cp.T).nnz == 0
    diff = (nb - nb.multiply(cp.astype(bool))).nnz
    assert diff == 0
    # two cells around each interior edge: at most 13 coupled DOFs
    assert np.diff(cp.indptr).max() <= 13


def test_half_mesh_two_cells():
    half = refine_half(build_uniform_mesh((0, 1, 0, 1), 1))
    assert half.mesh.n_cells == 8
    assert half.classification_counts() == {"midpoint": 5, "interior": 0, "boundary": 4}


def test_half_mesh_partition(unit_mesh):
    half = HalfMesh(unit_mesh)
    counts = half.classification_counts()
    assert sum(counts.values()) == half.mesh.n_vertices
    assert counts["midpoint"] == unit_mesh.n_edges
    assert np.allclose(half.mesh.vertices[unit_mesh.n_vertices:], unit_mesh.midpoints)
    assert set(np.unique(half.kind)) <= {MIDPOINT, INTERIOR_VERTEX, BOUNDARY_VERTEX}
    assert half.mesh.areas.sum() == pytest.approx(unit_mesh.areas.sum(), rel=1e-13)
    for k in range(unit_mesh.n_cells):
        assert half.mesh.areas[4 * k:4 * k + 4].sum() == pytest.approx(unit_mesh.areas[k], rel=1e-13)


def test_hexagon_ring():
    m = build_uniform_mesh((0, 1, 0, 1), 2)
    half = refine_half(m)
    assert half.classification_counts()["interior"] == 1
    centre = int(np.flatnonzero(half.kind == INTERIOR_VERTEX)[0])
    assert np.allclose(m.vertices[centre], [0.5, 0.5])
    ring = ring_polygon(half, centre)
    assert ring.s == 6 and ring.convex
    expected = {(0.75, 0.5), (0.75, 0.75), (0.5, 0.75), (0.25, 0.5), (0.25, 0.25), (0.5, 0.25)}
    assert {tuple(p) for p in ring.vertices} == expected
    # counterclockwise
    x, y = ring.vertices.T
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0


def test_equilateral_patch_is_regular_hexagon():
    ang = np.arange(6) * np.pi / 3
    verts = np.vstack([[0, 0], np.c_[np.cos(ang), np.sin(ang)]])
    cells = [[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)]
    half = refine_half(TriMesh(verts, cells))
    ring = ring_polygon(half, 0)
    r = np.linalg.norm(ring.vertices, axis=1)
    assert ring.s == 6 and ring.convex
    assert np.allclose(r, 0.5)


def test_reflex_ring_rejected():
    ang = np.arange(6) * np.pi / 3
    outer = np.c_[np.cos(ang), np.sin(ang)]
    # pull one outer vertex inward past the centre line of its neighbours
    outer[0] = [0.25, 0.0]
    verts = np.vstack([[0, 0], outer])
    cells = [[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)]
    half = refine_half(TriMesh(verts, cells))
    with pytest.raises(NonConvexRing):
        ring_polygon(half, 0)


def test_ring_of_boundary_vertex_rejected(unit_mesh):
    half = refine_half(unit_mesh)
    with pytest.raises(ValueError):
        ring_polygon(half, 0)


def test_mesh_file_round_trip(tmp_path, rng):
    m = build_uniform_mesh((0, 1, 0, 1), 3)
    v = m.vertices + 0.01 * rng.standard_normal(m.vertices.shape)
    m = TriMesh(v, m.cells)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.cells, m.cells)


def test_malformed_mesh_file(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3 1\n0 0\n1 0\n")
    with pytest.raises(MeshError):
        read_mesh(p)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8))
def test_adjacency_symmetric_on_rectangles(nx, ny):
    m = build_uniform_mesh((0.0, nx / ny, 0.0, 1.0), nx)
    nb = m.neighbors
    assert (nb != nb.T).nnz == 0
