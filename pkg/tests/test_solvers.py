import time

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import sparse

from spectral_dist.laplacian import laplacian_pair
from spectral_dist.shapes import sphere
from spectral_dist.solvers import (
    DisconnectedMeshError,
    IndefiniteMatrixError,
    SolveOptions,
    SolveReport,
    conjugate_gradient,
    factorize,
    remove_mean,
    solve_deflated,
    solve_spd,
)
from spectral_dist.mesh import TriangleMesh

from conftest import GOLDEN_NAMES, dense_eigs, pair_of

DIRECT = SolveOptions(method="direct-cholesky")
CG = SolveOptions(preconditioner="jacobi")


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    A = sparse.random(n, n, density=0.08, random_state=rng)
    A = A + A.T
    return sparse.csr_matrix(A + sparse.identity(n) * (abs(A).sum(axis=1).max() + 1.0))


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol=0)
    with pytest.raises(ValueError):
        SolveOptions(tol=1.5)
    with pytest.raises(ValueError):
        SolveOptions(maxiter=0)
    with pytest.raises(ValueError):
        SolveOptions(method="lu")
    with pytest.raises(ValueError):
        SolveOptions(preconditioner="ilu")


def test_diagonal_solve_exact(rng):
    d = rng.uniform(0.1, 2.0, 40)
    b = rng.standard_normal(40)
    x = solve_spd(sparse.diags(d).tocsr(), b)
    np.testing.assert_array_equal(x, b / d)
    X = solve_spd(sparse.diags(d).tocsr(), np.column_stack([b, 2 * b]))
    np.testing.assert_array_equal(X[:, 1], 2 * b / d)


def test_unit_mass_identity(rng):
    b = rng.standard_normal(10)
    np.testing.assert_array_equal(solve_spd(sparse.identity(10, format="csr"), b), b)


@pytest.mark.parametrize("opts", [DIRECT, CG, SolveOptions(preconditioner="none")], ids=["direct", "cg-jacobi", "cg"])
def test_random_spd_against_dense(opts, rng):
    A = random_spd(50, 3)
    b = rng.standard_normal(50)
    rep = SolveReport()
    x = solve_spd(A, b, opts, rep)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-8)
    assert rep.converged


def test_indefinite_breakdown():
    A = sparse.diags([1.0, -2.0, 3.0, 1.0]) + sparse.diags([0.1, 0.1, 0.1], 1) + sparse.diags([0.1, 0.1, 0.1], -1)
    with pytest.raises(IndefiniteMatrixError):
        conjugate_gradient(sparse.csr_matrix(A), np.ones(4))


def test_nonconvergence_returns_best_iterate():
    A = random_spd(80, 5)
    b = np.ones(80)
    rep = SolveReport()
    with pytest.warns(RuntimeWarning):
        x = solve_spd(A, b, SolveOptions(maxiter=2, preconditioner="none"), rep)
    assert not rep.converged
    assert np.all(np.isfinite(x))
    assert np.linalg.norm(A @ x - b) < np.linalg.norm(b)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)))
def test_mean_removal_idempotent(f):
    B = pair_of("icosahedron", "full-fem").mass
    once = remove_mean(B, f)
    np.testing.assert_allclose(remove_mean(B, once), once, rtol=0, atol=1e-15 * max(1.0, np.abs(f).max()))
    assert abs(np.ones(12) @ (B @ once)) <= 1e-12 * max(1.0, np.abs(f).max())


def test_mean_removal_columnwise(rng):
    B = pair_of("icosahedron").mass
    F = rng.standard_normal((12, 3))
    np.testing.assert_allclose(remove_mean(B, F)[:, 2], remove_mean(B, F[:, 2]))


@pytest.mark.parametrize("opts", [DIRECT, CG], ids=["direct", "cg"])
def test_deflated_constant_is_zero(opts):
    pr = pair_of("sphere500")
    g = solve_deflated(pr.stiffness, pr.mass, np.full(pr.n_vertices, 3.0), opts)
    assert np.abs(g).max() <= 1e-12


@pytest.mark.parametrize("name", GOLDEN_NAMES)
@pytest.mark.parametrize("scheme", ["barycentric-lumped", "full-fem"])
@pytest.mark.parametrize("opts", [DIRECT, CG], ids=["direct", "cg"])
def test_deflated_spectral_oracle(name, scheme, opts):
    pr = pair_of(name, scheme)
    w, X = dense_eigs(name, scheme)
    g = solve_deflated(pr.stiffness, pr.mass, X[:, 1], opts)
    np.testing.assert_allclose(g, X[:, 1] / w[1], atol=1e-8)
    b = pr.mass @ remove_mean(pr.mass, X[:, 1])
    assert np.linalg.norm(pr.stiffness @ g - b) <= 1e-10 * np.linalg.norm(b)
    assert abs(np.ones(pr.n_vertices) @ (pr.mass @ g)) <= 1e-12


@pytest.mark.parametrize("name", ["icosahedron", "sphere500", "blob1500"])
def test_factor_matches_iterative(name, rng):
    pr = pair_of(name)
    F = factorize(pr.stiffness, mass=pr.mass)
    f = rng.standard_normal(pr.n_vertices)
    g_direct = F.solve(pr.mass @ remove_mean(pr.mass, f))
    g_cg = solve_deflated(pr.stiffness, pr.mass, f, CG)
    np.testing.assert_allclose(g_direct, g_cg, atol=1e-8 * np.abs(g_direct).max())


def test_factor_of_diagonal_is_division(rng):
    pr = pair_of("sphere500")
    F = factorize(pr.mass)
    b = rng.standard_normal(pr.n_vertices)
    np.testing.assert_array_equal(F.solve(b), b / pr.mass.diagonal())
    assert F.stats()["nnz_factor"] == pr.n_vertices


def test_factorization_residual(rng):
    A = random_spd(200, 11)
    F = factorize(A)
    B = rng.standard_normal((200, 4))
    X = F.solve(B)
    assert np.linalg.norm(A @ X - B) <= 1e-10 * np.linalg.norm(B)


def test_dense_oracle_small_system(rng):
    pr = pair_of("sphere500", "full-fem")
    A = (pr.stiffness + 5.0 * pr.mass).tocsr()
    b = rng.standard_normal(pr.n_vertices)
    oracle = sla.solve(A.toarray(), b, assume_a="pos")
    for opts in (DIRECT, CG):
        np.testing.assert_allclose(solve_spd(A, b, opts), oracle, atol=1e-7)


def test_disconnected_mesh_detected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], float)
    two = TriangleMesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    pr = laplacian_pair(two)
    rhs = np.array([1.0, 0, 0, 0, 0, 0])
    with pytest.raises(DisconnectedMeshError):
        solve_deflated(pr.stiffness, pr.mass, rhs, SolveOptions(maxiter=60))


@pytest.mark.slow
def test_factorization_reuse_speedup(rng):
    """Reusing one factorization beats fresh iterative solves (machine-relative, generous margin)."""
    pr = laplacian_pair(sphere(2000))
    F = factorize(pr.stiffness, mass=pr.mass)
    rhs = rng.standard_normal((pr.n_vertices, 100))
    t0 = time.perf_counter()
    for j in range(100):
        F.solve(pr.mass @ remove_mean(pr.mass, rhs[:, j]))
    direct = time.perf_counter() - t0
    t0 = time.perf_counter()
    for j in range(100):
        solve_deflated(pr.stiffness, pr.mass, rhs[:, j], CG)
    iterative = time.perf_counter() - t0
    assert iterative >= 5 * direct
