import warnings

import numpy as np
import pytest

from spectral_dist.filters import (
    CanonicalRationalFilter,
    Filter,
    PoleInIntervalError,
    RationalFilter,
    fit_rational,
)
from spectral_dist.laplacian import lambda_max_bound
from spectral_dist.solvers import SolveOptions, remove_mean
from spectral_dist.spectrum_free import (
    IntervalMismatchError,
    _real_factors,
    apply_operator,
    apply_pinv_power,
    apply_power,
    build_evaluator,
    distance,
    distance_field,
    fit_for_pair,
    kernel_column,
)

from conftest import GOLDEN_NAMES, dense_eigs, pair_of

CG = SolveOptions(method="conjugate-gradient", preconditioner="jacobi", tol=1e-12)


def dense_filtered(name, weights, scheme="barycentric-lumped"):
    """``X diag(weights) X' B`` with ``weights`` evaluated on the dense spectrum."""
    w, X = dense_eigs(name, scheme)
    B = pair_of(name, scheme).mass.toarray()
    return (X * weights(w)) @ X.T @ B


def pinv_weights(p):
    return lambda w: np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0) ** p, 0.0)


@pytest.mark.parametrize("name", ["icosahedron", "sphere500"])
@pytest.mark.parametrize("scheme", ["barycentric-lumped", "full-fem"])
def test_powers_against_dense(name, scheme, rng):
    pr = pair_of(name, scheme)
    f = rng.standard_normal(pr.n_vertices)
    Lt = np.linalg.solve(pr.mass.toarray(), pr.stiffness.toarray())
    for i in (1, 2, 3):
        expect = np.linalg.matrix_power(Lt, i) @ f
        np.testing.assert_allclose(apply_power(pr, f, i), expect, atol=1e-9 * np.abs(expect).max())
    np.testing.assert_array_equal(apply_power(pr, f, 0), f)
    for i in (1, 2):
        expect = dense_filtered(name, pinv_weights(i), scheme) @ f
        for opts in (None, CG):
            np.testing.assert_allclose(apply_pinv_power(pr, f, i, opts), expect, atol=1e-8 * np.abs(expect).max())


def test_power_validation():
    pr = pair_of("icosahedron")
    with pytest.raises(ValueError):
        apply_power(pr, np.ones(12), -1)
    with pytest.raises(ValueError):
        apply_pinv_power(pr, np.ones(12), 0)


def test_real_factorisation_roundtrip():
    coef = np.array([2.0, -3.0, 0.5, 1.0, 0.25])
    gain, facs = _real_factors(coef)
    y = np.linspace(-2, 2, 9)
    prod = np.full_like(y, gain)
    for fac in facs:
        prod *= (y - fac.re) if fac.kind == "linear" else (y - fac.re) ** 2 + fac.abs2 - fac.re**2
    np.testing.assert_allclose(prod, np.polyval(coef[::-1], y), rtol=1e-12)


@pytest.mark.parametrize("name", GOLDEN_NAMES)
@pytest.mark.parametrize("f,p", [(Filter("commute-time"), 1), (Filter("biharmonic"), 2)], ids=["ct", "bh"])
def test_exact_filters_take_canonical_path(name, f, p):
    pr = pair_of(name)
    ev = build_evaluator(pr, f)
    assert ev.path == "canonical" and ev.sigma == 0.0
    K = dense_filtered(name, pinv_weights(p))
    for i in range(min(pr.n_vertices, 4)):
        col = kernel_column(ev, i)
        np.testing.assert_allclose(col, K[:, i], atol=1e-9 * np.abs(K[:, i]).max())


@pytest.mark.parametrize("name", GOLDEN_NAMES)
@pytest.mark.parametrize("t", [1e-3, 1e-2, 1e-1])
def test_diffusion_kernel_against_dense(name, t):
    pr = pair_of(name)
    ev = build_evaluator(pr, Filter("diffusion", t=t))
    assert ev.path == "factored" and ev.info["path_reason"]
    K = dense_filtered(name, lambda w: np.exp(-t * w))
    rng = np.random.default_rng(7)
    for i in rng.integers(0, pr.n_vertices, 5):
        col = kernel_column(ev, i)
        # same tolerance as the distance comparison: the fit error sigma dominates
        assert np.abs(col - K[:, i]).max() <= max(1e-6, 2 * ev.sigma)


@pytest.mark.parametrize("scheme", ["barycentric-lumped", "full-fem"])
@pytest.mark.parametrize("opts", [None, CG], ids=["direct", "cg"])
def test_solver_variants_agree(scheme, opts):
    name = "sphere500"
    ev = build_evaluator(pair_of(name, scheme), Filter("diffusion", t=1e-2), options=opts)
    K = dense_filtered(name, lambda w: np.exp(-1e-2 * w), scheme)
    col = kernel_column(ev, 11)
    assert np.abs(col - K[:, 11]).max() <= max(1e-6, 2 * ev.sigma)
    if opts is CG:
        rep = ev.report()
        assert rep["iterative_solves"] > 0 and rep["max_relative_residual"] <= 1e-10


@pytest.mark.parametrize("f", [Filter("log-composite"), Filter("power", p=1.5), Filter("mexican-hat")],
                         ids=["log", "pow", "hat"])
def test_pole_filters_within_sigma(f):
    name = "sphere500"
    pr = pair_of(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ev = build_evaluator(pr, f)
    K = dense_filtered(name, lambda w: f.inverse(w))
    k = int(np.ceil(f.zero_order))
    w = dense_eigs(name)[0]
    # |c - 1/rho| <= sigma s^-k on the spectrum; transfer to columns through the B-orthonormal basis
    lam2 = w[1]
    bound = ev.sigma / lam2**k * np.sqrt(pr.n_vertices)
    for i in (0, 100, 250):
        col = kernel_column(ev, i)
        assert np.abs(col - K[:, i]).max() <= max(1e-6, bound)


def test_custom_rational_evaluation():
    f = Filter("custom-rational", numerator=(1.0, 1.0), denominator=(1.0, -2.0, 1.0))
    name = "sphere500"
    pr = pair_of(name)
    # (1 - s)^2 / (1 + s) has a growing polynomial part; fit on the whole bound interval
    ev = build_evaluator(pr, f, degree=(2, 1))
    assert ev.sigma <= 1e-12 * (1 + lambda_max_bound(pr)) ** 2
    K = dense_filtered(name, lambda w: (1 - w) ** 2 / (1 + w))
    col = kernel_column(ev, 5)
    np.testing.assert_allclose(col, K[:, 5], atol=1e-8 * np.abs(K[:, 5]).max())


@pytest.mark.parametrize("name", GOLDEN_NAMES)
def test_distance_field_matches_pairwise(name):
    pr = pair_of(name)
    ev = build_evaluator(pr, Filter("biharmonic"))
    field = distance_field(ev, 0, batch=7)
    for j in range(0, pr.n_vertices, max(1, pr.n_vertices // 5)):
        assert field[j] == pytest.approx(distance(ev, 0, j), rel=1e-9, abs=1e-14)
    assert field[0] == 0.0 and distance(ev, 2 % pr.n_vertices, 2 % pr.n_vertices) == 0.0


def test_distance_field_oracle():
    name = "blob1500"
    pr = pair_of(name)
    t = 1e-2
    ev = build_evaluator(pr, Filter("diffusion", t=t))
    w, X = dense_eigs(name)
    P = (pr.mass @ X) * np.exp(-t * w)
    expect = np.linalg.norm(P[17][None, :] - P, axis=1)
    np.testing.assert_allclose(distance_field(ev, 17), expect, atol=max(1e-6, 2 * ev.sigma))


def test_unit_mass_source():
    name = "sphere500"
    pr = pair_of(name)
    ev = build_evaluator(pr, Filter("commute-time"))
    K = dense_filtered(name, pinv_weights(1))
    col = kernel_column(ev, 3, source="unit-mass")
    expect = K[:, 3] / pr.mass.diagonal()[3]
    np.testing.assert_allclose(col, expect, atol=1e-9 * np.abs(expect).max())
    with pytest.raises(ValueError):
        kernel_column(ev, 3, source="dirac")


def test_green_kernel_identity(rng):
    pr = pair_of("blob1500")
    ev = build_evaluator(pr, Filter("commute-time"))
    for i in rng.integers(0, pr.n_vertices, 5):
        col = kernel_column(ev, i)
        e = np.zeros(pr.n_vertices)
        e[i] = 1.0
        lhs = apply_power(pr, col, 1)
        np.testing.assert_allclose(lhs, remove_mean(pr.mass, e), atol=1e-9)


def test_apply_operator_block(rng):
    pr = pair_of("icosahedron")
    ev = build_evaluator(pr, Filter("diffusion", t=0.1))
    F = rng.standard_normal((12, 3))
    np.testing.assert_allclose(apply_operator(ev, F)[:, 1], apply_operator(ev, F[:, 1]), rtol=1e-12)
    with pytest.raises(ValueError):
        apply_operator(ev, np.ones(5))


def test_interval_mismatch():
    pr = pair_of("sphere500")
    rat = fit_rational(Filter("diffusion", t=1e-2), (3, 3), (0.0, 1.0))
    with pytest.raises(IntervalMismatchError):
        build_evaluator(pr, rat)


def test_pole_inside_interval_rejected():
    pr = pair_of("icosahedron")
    lam = lambda_max_bound(pr)
    bad = RationalFilter([1.0], [1.0, -1.0 / (0.5 * lam)], (0.0, lam), 0.0)
    with pytest.raises(PoleInIntervalError):
        build_evaluator(pr, bad)


def test_fit_reuse_for_diffusion():
    # two meshes whose t * lambda_max round to the same power of two share one fit
    a = fit_for_pair(Filter("diffusion", t=0.1), pair_of("sphere500"), lam=100.0)
    b = fit_for_pair(Filter("diffusion", t=0.1), pair_of("sphere500"), lam=120.0)
    assert a.sigma == b.sigma and a.interval == b.interval


def test_zero_order_warning():
    pr = pair_of("icosahedron")
    canon = CanonicalRationalFilter([1.0], [1.0], (0.0, lambda_max_bound(pr)), source=Filter("commute-time").to_dict())
    with pytest.warns(RuntimeWarning, match="a_0"):
        build_evaluator(pr, canon)


def test_report_contents():
    ev = build_evaluator(pair_of("sphere500"), Filter("diffusion", t=0.1))
    rep = ev.report()
    for key in ("lambda_max_bound", "sigma", "path", "path_reason", "shifted_system_conditions",
                "kernel_condition_bound", "factorizations", "setup_seconds"):
        assert key in rep
    assert all(c >= 1.0 for c in rep["shifted_system_conditions"])


def test_vertex_range():
    ev = build_evaluator(pair_of("icosahedron"), Filter("commute-time"))
    with pytest.raises(IndexError):
        distance(ev, 0, 12)
    with pytest.raises(IndexError):
        distance_field(ev, 12)
