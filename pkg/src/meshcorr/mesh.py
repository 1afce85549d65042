"""Triangle meshes and the discrete operators built on them.

A TriMesh is immutable after construction. ``vertex_areas`` and
``cotangent_weights`` produce the mass/stiffness pair (A, W) that the
spectral module consumes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ArgumentError, DataError, DegenerateGeometryError, EmptyMeshError

COT_CLAMP = 1.0e4  # bounds cotangents of near-degenerate triangles


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray          # (n, 3) float64
    triangles: np.ndarray         # (m, 3) int64
    colors: np.ndarray | None = None  # (n, 3) in [0, 1], optional

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"vertices must be (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise DataError(f"triangles must be (m, 3), got {t.shape}")
        if not np.isfinite(v).all():
            raise DataError("vertex coordinates must be finite")
        n = len(v)
        if t.size and (t.min() < 0 or t.max() >= n):
            raise DataError("triangle index out of range")
        if t.size:
            degen = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            if degen.any():
                raise DataError(
                    f"{int(degen.sum())} triangles repeat a vertex index")
        if self.colors is not None:
            c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
            if c.shape != (n, 3):
                raise DataError(f"colors must be ({n}, 3), got {c.shape}")
            if not np.isfinite(c).all():
                raise DataError("colors must be finite")
            c.setflags(write=False)
            object.__setattr__(self, "colors", c)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, (e, 2) with i < j."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def with_colors(self, colors) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles, colors)


@dataclass(frozen=True)
class VertexAreas:
    """Diagonal of the barycentric mass matrix A."""
    areas: np.ndarray  # (n,), positive

    @property
    def total(self) -> float:
        return float(self.areas.sum())

    def matrix(self) -> sp.dia_matrix:
        return sp.diags(self.areas)


def triangle_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    t = mesh.triangles
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def vertex_areas(mesh: TriMesh) -> VertexAreas:
    """Barycentric vertex areas: 1/3 of each incident triangle."""
    tri_a = triangle_areas(mesh)
    if (tri_a == 0.0).any():
        warnings.warn(f"{int((tri_a == 0).sum())} zero-area triangles "
                      "contribute nothing to vertex areas")
    areas = np.zeros(mesh.n_vertices)
    np.add.at(areas, mesh.triangles.ravel(), np.repeat(tri_a / 3.0, 3))
    return VertexAreas(areas)


def cotangent_weights(mesh: TriMesh) -> sp.csr_matrix:
    """Cotangent stiffness matrix W.

    Off-diagonal w_ij = 1/2 (cot a_ij + cot b_ij) over the triangles
    sharing edge (i, j); diagonal makes each row sum to zero, so W is
    negative semidefinite. Cotangents are clamped to +-COT_CLAMP.
    """
    v = mesh.vertices
    t = mesh.triangles
    n = mesh.n_vertices

    rows, cols, vals = [], [], []
    # corner c is opposite edge (a, b)
    for c, a, b in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        u = v[t[:, a]] - v[t[:, c]]
        w = v[t[:, b]] - v[t[:, c]]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        # guard zero-area triangles; clamp handles near-degenerate ones
        cot = np.einsum("ij,ij->i", u, w) / np.maximum(cross, 1e-300)
        cot = np.clip(cot, -COT_CLAMP, COT_CLAMP)
        half = 0.5 * cot
        rows.append(t[:, a]); cols.append(t[:, b]); vals.append(half)
        rows.append(t[:, b]); cols.append(t[:, a]); vals.append(half)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    W = W + sp.diags(-np.asarray(W.sum(axis=1)).ravel())
    return W.tocsr()


def normalize_mesh(mesh: TriMesh, target_side: float = 0.3) -> TriMesh:
    """Center the bounding box at the origin and scale its longest side."""
    if mesh.n_vertices == 0:
        raise EmptyMeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounding_box()
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateGeometryError("all vertices coincide")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) * (target_side / extent)
    return TriMesh(verts, mesh.triangles, mesh.colors)


def cleanup_mesh(mesh: TriMesh, merge_tol_fraction: float = 0.01) -> TriMesh:
    """Merge near-coincident vertices, keep the largest connected
    component (by area), and drop unreferenced vertices.

    merge_tol_fraction scales the bounding-box diagonal; the lowest
    vertex index survives a merge and colors are averaged.
    """
    if not (0.0 < merge_tol_fraction <= 0.1):
        raise ArgumentError(
            f"merge_tol_fraction must be in (0, 0.1], got {merge_tol_fraction}")
    if mesh.n_vertices == 0:
        raise EmptyMeshError("empty input mesh")

    lo, hi = mesh.bounding_box()
    tol = merge_tol_fraction * float(np.linalg.norm(hi - lo))
    verts, tris, colors = mesh.vertices, mesh.triangles, mesh.colors

    # vertex merging via union-find over close pairs
    if tol > 0.0:
        pairs = cKDTree(verts).query_pairs(tol, output_type="ndarray")
        if len(pairs):
            parent = np.arange(len(verts))

            def find(i):
                root = i
                while parent[root] != root:
                    root = parent[root]
                while parent[i] != root:
                    parent[i], i = root, parent[i]
                return root

            for i, j in pairs:
                ri, rj = find(i), find(j)
                if ri != rj:
                    # lowest index wins
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
            root = np.array([find(i) for i in range(len(verts))])
            keep = np.flatnonzero(root == np.arange(len(verts)))
            remap = np.empty(len(verts), dtype=np.int64)
            remap[keep] = np.arange(len(keep))
            new_index = remap[root]
            verts = verts[keep]
            if colors is not None:
                summed = np.zeros((len(keep), 3))
                counts = np.zeros(len(keep))
                np.add.at(summed, new_index, colors)
                np.add.at(counts, new_index, 1.0)
                colors = summed / counts[:, None]
            tris = new_index[tris]

    # drop triangles that collapsed in the merge
    if tris.size:
        ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) \
            & (tris[:, 0] != tris[:, 2])
        tris = tris[ok]
    if len(tris) == 0:
        raise EmptyMeshError("no triangles left after cleanup")

    # largest connected component by surface area
    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    adj = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])),
                        shape=(len(verts), len(verts)))
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp > 1:
        probe = TriMesh(verts, tris)
        tri_a = triangle_areas(probe)
        tri_label = labels[tris[:, 0]]
        comp_area = np.zeros(n_comp)
        np.add.at(comp_area, tri_label, tri_a)
        best = int(np.argmax(comp_area))
        tris = tris[tri_label == best]
    if len(tris) == 0:
        raise EmptyMeshError("no triangles left after component filtering")

    # drop unreferenced vertices
    used = np.zeros(len(verts), dtype=bool)
    used[tris.ravel()] = True
    remap = np.cumsum(used) - 1
    verts = verts[used]
    if colors is not None:
        colors = colors[used]
    tris = remap[tris]
    return TriMesh(verts, tris, colors)
