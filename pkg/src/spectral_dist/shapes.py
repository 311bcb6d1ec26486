"""Deterministic test shapes: icosahedron, spheres, a noisy blob, and perturbations."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import TriangleMesh


def single_triangle(equilateral: bool = False) -> TriangleMesh:
    if equilateral:
        v = [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]]
    else:
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    return TriangleMesh(v, [[0, 1, 2]])


def icosahedron() -> TriangleMesh:
    """Regular icosahedron inscribed in the unit sphere."""
    phi = (1 + np.sqrt(5)) / 2
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v[0])
    t = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    return TriangleMesh(v, t)


def _fibonacci_points(n):
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z**2)
    theta = np.pi * (1 + np.sqrt(5)) * k
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _hull_mesh(points, radii=None):
    hull = ConvexHull(points)
    t = hull.simplices.copy()
    # orient outward so normals are consistent (not needed by the operators, nice for viewers)
    c = points[t].mean(axis=1)
    nrm = np.cross(points[t[:, 1]] - points[t[:, 0]], points[t[:, 2]] - points[t[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, c) < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    v = points if radii is None else points * radii[:, None]
    return TriangleMesh(v, t)


def sphere(n: int, radius: float = 1.0) -> TriangleMesh:
    """Near-uniform triangulated sphere with ``n`` vertices (Fibonacci lattice)."""
    return _hull_mesh(_fibonacci_points(n) * radius)


def noisy_blob(n: int = 1500, seed: int = 0) -> TriangleMesh:
    """Star-shaped closed surface: a sphere with smooth bumps plus small radial noise."""
    rng = np.random.default_rng(seed)
    p = _fibonacci_points(n)
    x, y, z = p.T
    r = 1 + 0.25 * x * y + 0.2 * (z**2 - 1 / 3) + 0.15 * np.sin(3 * x) * z
    r = r * (1 + 0.01 * rng.standard_normal(n))
    return _hull_mesh(p, r)


def punch_hole(mesh: TriangleMesh, center: int, area_fraction: float = 0.05) -> tuple[TriangleMesh, np.ndarray]:
    """Remove the faces nearest ``center`` until ``area_fraction`` of the area is gone.

    Returns the new mesh and, for each of its vertices, the index of that vertex
    in the input mesh.
    """
    cen = mesh.vertices[mesh.triangles].mean(axis=1)
    dist = np.linalg.norm(cen - mesh.vertices[center], axis=1)
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(mesh.triangle_areas[order])
    n_drop = int(np.searchsorted(cum, area_fraction * mesh.total_area)) + 1
    keep = np.sort(order[n_drop:])
    t = mesh.triangles[keep]
    used = np.unique(t)
    remap = np.full(mesh.n_vertices, -1)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[t]), used


def jitter(mesh: TriangleMesh, amplitude: float = 0.005, seed: int = 0) -> TriangleMesh:
    """Displace vertices by isotropic noise of ``amplitude`` x bounding-box diagonal."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1, 1, size=mesh.vertices.shape) * amplitude * mesh.bbox_diagonal
    return TriangleMesh(mesh.vertices + noise, mesh.triangles)


def golden_meshes() -> dict[str, TriangleMesh]:
    """The five reference meshes used by the acceptance suite."""
    return {
        "triangle": single_triangle(equilateral=True),
        "icosahedron": icosahedron(),
        "sphere500": sphere(500),
        "sphere2000": sphere(2000),
        "blob1500": noisy_blob(1500),
    }
