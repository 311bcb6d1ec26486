"""Triangle meshes and per-vertex scalar fields."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

# Faces with area below this fraction of the squared bounding-box diagonal are rejected.
DEGENERATE_AREA_RTOL = 1e-12


class MeshError(ValueError):
    """Raised when a mesh (or a field on it) violates its invariants."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex positions ``(n, 3)`` and 0-based triangle indices ``(m, 3)``.

    Validation runs on construction and the arrays are made read-only, so a
    mesh can be shared freely once built.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (m, 3), got {t.shape}")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        n = len(v)
        bad = np.flatnonzero(np.any((t < 0) | (t >= n), axis=1))
        if len(bad):
            raise MeshError(
                f"triangle index out of range [0, {n}) in faces {bad[:10].tolist()}"
            )
        rep = np.flatnonzero(
            (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        )
        if len(rep):
            raise MeshError(f"faces repeat a vertex index: {rep[:10].tolist()}")
        unused = np.setdiff1d(np.arange(n), t.ravel())
        if len(unused):
            raise MeshError(
                f"{len(unused)} vertices are not referenced by any face "
                f"(first: {unused[:10].tolist()})"
            )
        areas = _triangle_areas(v, t)
        diag = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
        thin = np.flatnonzero(areas < DEGENERATE_AREA_RTOL * diag**2)
        if len(thin):
            raise MeshError(
                f"{len(thin)} degenerate faces (area < {DEGENERATE_AREA_RTOL:g} x "
                f"bbox diagonal^2): {thin[:20].tolist()}"
            )
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.triangles)

    @property
    def total_area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    def adjacency(self) -> sparse.csr_matrix:
        e = self.edges
        n = self.n_vertices
        a = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    def n_components(self) -> int:
        return int(csgraph.connected_components(self.adjacency(), directed=False)[0])

    def is_connected(self) -> bool:
        return self.n_components() == 1

    def scaled(self, c: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * c, self.triangles)


def _triangle_areas(v, t):
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def as_field(mesh: TriangleMesh, values) -> np.ndarray:
    """Return ``values`` as a float vector, checking it is a valid field on ``mesh``."""
    f = np.asarray(values, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise MeshError(f"field has shape {f.shape}, expected ({mesh.n_vertices},)")
    if not np.all(np.isfinite(f)):
        raise MeshError("field entries must be finite")
    return f


def indicator(mesh: TriangleMesh, i: int) -> np.ndarray:
    """Field equal to 1 at vertex ``i`` and 0 elsewhere."""
    n = mesh.n_vertices
    if not 0 <= i < n:
        raise IndexError(f"vertex index {i} out of range [0, {n})")
    e = np.zeros(n)
    e[i] = 1.0
    return e
