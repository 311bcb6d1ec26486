import warnings

import numpy as np
import pytest
from scipy.io import mmread

from spectral_dist.laplacian import (
    UnsupportedSchemeError,
    export_matrix_market,
    lambda_max_bound,
    lambda_max_estimate,
    laplacian_pair,
    mass_matrix,
    stiffness_matrix,
)
from spectral_dist.mesh import TriangleMesh
from spectral_dist.shapes import icosahedron, single_triangle, sphere

from conftest import GOLDEN_NAMES, dense_eigs, golden, pair_of


def fem_oracle(mesh):
    """Dense linear-FEM stiffness and mass from hat-function gradients (no cotangents)."""
    n = mesh.n_vertices
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        e1, e2 = p[1] - p[0], p[2] - p[0]
        G = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
        area = 0.5 * np.sqrt(np.linalg.det(G))
        # gradients of barycentric coordinates in the (e1, e2) frame
        D = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        local = area * D @ np.linalg.inv(G) @ D.T
        K[np.ix_(tri, tri)] += local
        M[np.ix_(tri, tri)] += area / 12 * (np.ones((3, 3)) + np.eye(3))
    return K, M


def test_equilateral_triangle_entries():
    L = stiffness_matrix(single_triangle(equilateral=True)).toarray()
    off = -1 / (2 * np.sqrt(3))
    np.testing.assert_allclose(L[~np.eye(3, dtype=bool)], off, rtol=1e-14)
    np.testing.assert_allclose(np.diag(L), 1 / np.sqrt(3), rtol=1e-14)


def test_right_angle_kills_weight():
    L = stiffness_matrix(single_triangle()).toarray()
    # vertices 1 and 2 are the acute ones; the angle opposite edge (1, 2) is the right angle at 0
    assert L[1, 2] == pytest.approx(0.0, abs=1e-15)
    assert L[0, 1] == pytest.approx(-0.5)


@pytest.mark.parametrize("mesh", [single_triangle(), icosahedron(), sphere(120)], ids=["tri", "ico", "s120"])
def test_matches_fem_oracle(mesh):
    K, M = fem_oracle(mesh)
    np.testing.assert_allclose(stiffness_matrix(mesh).toarray(), K, atol=1e-12 * np.abs(K).max())
    np.testing.assert_allclose(mass_matrix(mesh, "full-fem").toarray(), M, atol=1e-14)
    np.testing.assert_allclose(mass_matrix(mesh).diagonal(), M.sum(axis=1), rtol=1e-12)


def test_single_triangle_mass():
    m = single_triangle()
    A = m.total_area
    np.testing.assert_allclose(mass_matrix(m).toarray(), np.eye(3) * A / 3)
    full = mass_matrix(m, "full-fem").toarray()
    np.testing.assert_allclose(full.sum(axis=1), A / 3)
    assert np.trace(full) == pytest.approx(A / 2)


@pytest.mark.parametrize("name", GOLDEN_NAMES)
@pytest.mark.parametrize("scheme", ["barycentric-lumped", "full-fem"])
def test_pair_invariants(name, scheme, rng):
    pr = pair_of(name, scheme)
    L, B = pr.stiffness, pr.mass
    assert (L - L.T).count_nonzero() == 0
    assert (B - B.T).count_nonzero() == 0
    Lmax = abs(L).max()
    assert np.abs(L @ np.ones(pr.n_vertices)).max() <= 1e-10 * Lmax
    F = rng.standard_normal((pr.n_vertices, 100))
    quad = np.einsum("ij,ij->j", F, L @ F)
    assert np.all(quad >= -1e-10 * np.einsum("ij,ij->j", F, F) * Lmax)
    assert np.all(np.einsum("ij,ij->j", F, B @ F) > 0)
    assert B.sum() == pytest.approx(golden(name).total_area, rel=1e-12)
    assert pr.mass_is_diagonal == (scheme == "barycentric-lumped")


def test_scale_covariance():
    m = sphere(300)
    c = 3.7
    L1, L2 = stiffness_matrix(m), stiffness_matrix(m.scaled(c))
    np.testing.assert_allclose(L2.toarray(), L1.toarray(), atol=1e-12 * abs(L1).max())
    for scheme in ("barycentric-lumped", "full-fem"):
        B1, B2 = mass_matrix(m, scheme), mass_matrix(m.scaled(c), scheme)
        np.testing.assert_allclose(B2.toarray(), c * c * B1.toarray(), rtol=1e-12)


@pytest.mark.parametrize("name", GOLDEN_NAMES)
def test_lambda_max_bound_and_estimate(name):
    pr = pair_of(name)
    lam = dense_eigs(name)[0][-1]
    bound = lambda_max_bound(pr)
    est = lambda_max_estimate(pr, tol=1e-8)
    assert bound >= lam
    assert bound <= 10 * lam
    assert est <= bound
    assert est == pytest.approx(lam, rel=1e-3)


def test_estimate_full_fem():
    pr = pair_of("icosahedron", "full-fem")
    lam = dense_eigs("icosahedron", "full-fem")[0][-1]
    assert lambda_max_estimate(pr) == pytest.approx(lam, rel=1e-3)
    with pytest.raises(UnsupportedSchemeError):
        lambda_max_bound(pr)


def test_strip_bound_positive():
    strip = TriangleMesh(
        np.array([[0, 0, 0], [1, 0, 0], [0, 0.01, 0], [1, 0.01, 0]], float),
        np.array([[0, 1, 2], [1, 3, 2]]),
    )
    b = lambda_max_bound(laplacian_pair(strip))
    assert np.isfinite(b) and b > 0


def test_estimate_fallback_warns():
    pr = pair_of("sphere500")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = lambda_max_estimate(pr, tol=1e-14, maxiter=2)
    assert est == pytest.approx(lambda_max_bound(pr))
    assert any("bound" in str(w.message) for w in caught)


def test_unknown_scheme():
    with pytest.raises(UnsupportedSchemeError):
        mass_matrix(icosahedron(), "voronoi")


def test_matrix_market_roundtrip(tmp_path):
    L = stiffness_matrix(icosahedron())
    export_matrix_market(L, tmp_path / "L.mtx")
    np.testing.assert_allclose(mmread(str(tmp_path / "L.mtx")).toarray(), L.toarray())
