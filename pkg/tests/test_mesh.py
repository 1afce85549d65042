import numpy as np
import pytest

from meshcorr.errors import ArgumentError, DataError, EmptyMeshError
from meshcorr.mesh import (COT_CLAMP, TriMesh, cleanup_mesh,
                           cotangent_weights, normalize_mesh,
                           triangle_areas, vertex_areas)

from conftest import grid_patch, icosphere, torus


def test_trimesh_validation():
    with pytest.raises(DataError):
        TriMesh(np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(DataError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
    with pytest.raises(DataError):
        TriMesh(np.array([[0, 0, np.nan]]), np.zeros((0, 3), dtype=int))
    with pytest.raises(DataError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))
    with pytest.raises(DataError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]), colors=np.zeros((2, 3)))


def test_trimesh_is_immutable():
    m = grid_patch(4, 4)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 9.0


def test_edges_unique_and_sorted():
    m = grid_patch(4, 4)
    e = m.edges()
    assert (e[:, 0] < e[:, 1]).all()
    assert len(np.unique(e, axis=0)) == len(e)


def test_triangle_areas_right_triangle():
    m = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                np.array([[0, 1, 2]]))
    assert triangle_areas(m) == pytest.approx([0.5])


def test_vertex_areas_brute_force():
    m = torus(12, 8)
    tri_a = triangle_areas(m)
    expected = np.zeros(m.n_vertices)
    for t, a in zip(m.triangles, tri_a):
        for v in t:
            expected[v] += a / 3.0
    areas = vertex_areas(m)
    np.testing.assert_allclose(areas.areas, expected, rtol=1e-12)
    assert areas.total == pytest.approx(tri_a.sum())


def test_vertex_areas_zero_area_warning():
    m = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]),
                np.array([[0, 1, 2], [0, 1, 3]]))
    with pytest.warns(UserWarning):
        vertex_areas(m)


def test_cotangent_weights_flat_grid_oracle():
    # on a unit right-triangle grid the axis neighbors get weight
    # 1/2(cot 45 + cot 45) = 1 and diagonal neighbors 1/2(cot 90 + cot 90) = 0
    m = grid_patch(5, 5, scale=4.0)  # unit spacing
    W = cotangent_weights(m).toarray()
    interior = 2 * 5 + 2  # vertex (2,2)
    row = W[interior]
    assert row[interior - 1] == pytest.approx(1.0)
    assert row[interior + 1] == pytest.approx(1.0)
    assert row[interior - 5] == pytest.approx(1.0)
    assert row[interior + 5] == pytest.approx(1.0)
    assert row[interior + 6] == pytest.approx(0.0, abs=1e-12)
    assert row[interior] == pytest.approx(-4.0)


def test_cotangent_weights_properties():
    m = icosphere(2)
    W = cotangent_weights(m)
    assert abs(W - W.T).max() < 1e-12
    assert np.abs(np.asarray(W.sum(axis=1))).max() < 1e-10
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.normal(size=m.n_vertices)
        assert x @ (W @ x) <= 1e-10  # negative semidefinite


def test_cotangent_clamp_on_sliver():
    eps = 1e-12
    m = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0.5, eps, 0]]),
                np.array([[0, 1, 2]]))
    W = cotangent_weights(m)
    assert np.abs(W.data).max() <= 2 * COT_CLAMP


def test_normalize_mesh():
    m = torus(16, 8, R=3.0, r=1.0)
    out = normalize_mesh(m)
    lo, hi = out.bounding_box()
    assert (hi - lo).max() == pytest.approx(0.3)
    assert np.abs((lo + hi) / 2).max() < 1e-12
    # pure similarity transform: shape ratios preserved
    assert out.n_vertices == m.n_vertices
    np.testing.assert_array_equal(out.triangles, m.triangles)


def test_normalize_mesh_errors():
    with pytest.raises(EmptyMeshError):
        normalize_mesh(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int)))
    with pytest.raises(DataError):
        normalize_mesh(TriMesh(np.zeros((4, 3)), np.array([[0, 1, 2]])))


def test_cleanup_merges_duplicates_lowest_index_survives():
    # vertex 3 duplicates vertex 0; colors should average
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1e-5, 0, 0]])
    tris = np.array([[0, 1, 2], [3, 2, 1]])
    colors = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1], [0.0, 0, 0]])
    out = cleanup_mesh(TriMesh(verts, tris, colors))
    assert out.n_vertices == 3
    np.testing.assert_array_equal(out.vertices[0], verts[0])
    np.testing.assert_allclose(out.colors[0], [0.5, 0, 0])
    assert out.n_triangles == 2


def test_cleanup_keeps_largest_component_by_area():
    big = grid_patch(6, 6, scale=10.0)
    small = grid_patch(3, 3, scale=0.1)
    verts = np.vstack([big.vertices, small.vertices + [50.0, 0, 0]])
    tris = np.vstack([big.triangles, small.triangles + big.n_vertices])
    out = cleanup_mesh(TriMesh(verts, tris))
    assert out.n_vertices == big.n_vertices
    assert out.n_triangles == big.n_triangles


def test_cleanup_drops_unreferenced_vertices():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5.0, 5, 5]])
    out = cleanup_mesh(TriMesh(verts, np.array([[0, 1, 2]])))
    assert out.n_vertices == 3


def test_cleanup_idempotent():
    m = icosphere(2)
    once = cleanup_mesh(m)
    twice = cleanup_mesh(once)
    np.testing.assert_array_equal(once.vertices, twice.vertices)
    np.testing.assert_array_equal(once.triangles, twice.triangles)


def test_cleanup_tolerance_validation():
    m = icosphere(1)
    with pytest.raises(ArgumentError):
        cleanup_mesh(m, merge_tol_fraction=0.0)
    with pytest.raises(ArgumentError):
        cleanup_mesh(m, merge_tol_fraction=0.2)
