"""Spectrum-free kernels and distances through sparse solves.

``1/rho`` is replaced by a rational function ``c`` and ``c(L~) f`` is evaluated
with ``L~ = B^-1 L`` only ever applied through solves with ``B`` and with
(shifted) ``L``. Two evaluation paths exist:

canonical
    ``c(s) = sum a_i s^i + sum b_i s^-i``; powers of ``L~`` come from
    ``B g_{i+1} = L g_i`` and powers of the pseudo-inverse from deflated solves
    ``L h_{i+1} = B h_i``.
factored
    ``c(s) = p(s) / (s^k q(s))``; numerator and denominator are split into real
    linear and quadratic factors and applied as a cascade of SPD solves.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from .filters import (
    CanonicalRationalFilter,
    Filter,
    IllConditionedBasisError,
    NotRepresentableError,
    PoleInIntervalError,
    RationalFilter,
    exact_canonical,
    fit_rational,
    kappa_bound,
    to_canonical,
)
from .laplacian import LaplacianPair, lambda_max_bound, lambda_max_estimate
from .solvers import (
    Factorization,
    SolveOptions,
    SolveReport,
    conjugate_gradient,
    factorize,
    remove_mean,
    solve_deflated,
    solve_spd,
)

DEFAULT_DEGREE = (5, 5)
BATCH = 256


class IntervalMismatchError(ValueError):
    pass


@dataclass(eq=False)
class _Factor:
    """One real factor of a polynomial in ``y = s / scale``: ``y - root`` or ``y^2 - 2 re y + abs2``."""

    kind: str  # "linear" | "quadratic"
    re: float
    abs2: float = 0.0
    system: object = None  # factorization or callable solving the shifted system
    sign: float = 1.0


def _real_factors(coef, tol=1e-9):
    """Leading coefficient plus real linear/quadratic factors of an ascending polynomial."""
    coef = np.trim_zeros(np.asarray(coef, dtype=float), "b")
    lead = coef[-1]
    if len(coef) == 1:
        return lead, []
    roots = P.polyroots(coef)
    out, used = [], np.zeros(len(roots), dtype=bool)
    order = np.argsort(np.abs(roots.imag))
    for i in order:
        if used[i]:
            continue
        z = roots[i]
        used[i] = True
        if abs(z.imag) <= tol * max(1.0, abs(z)):
            out.append(_Factor("linear", float(z.real)))
        else:
            cand = [j for j in range(len(roots)) if not used[j]]
            j = min(cand, key=lambda j: abs(roots[j] - np.conj(z)))
            used[j] = True
            out.append(_Factor("quadratic", float(z.real), float(abs(z) ** 2)))
    return lead, out


@dataclass(eq=False)
class SpectralEvaluator:
    """Evaluates ``c(L~)`` for a fixed Laplacian pair and rational filter.

    Build with :func:`build_evaluator`. Factorizations of ``B``, ``L`` and of
    every shifted system are created once and shared by all evaluations.
    """

    pair: LaplacianPair
    filter: object
    options: SolveOptions
    lambda_bound: float
    path: str
    mass_factor: Factorization | None = None
    stiffness_factor: Factorization | None = None
    info: dict = field(default_factory=dict)
    _num: list = field(default_factory=list, repr=False)
    _den: list = field(default_factory=list, repr=False)
    _gain: float = 1.0
    _scale: float = 1.0
    _pole_order: int = 0
    reports: list = field(default_factory=list, repr=False)

    @property
    def n_vertices(self) -> int:
        return self.pair.n_vertices

    @property
    def sigma(self) -> float:
        return float(self.filter.sigma)

    # -- primitive operators -------------------------------------------------

    def _mass_solve(self, v):
        if self.mass_factor is not None:
            return self.mass_factor.solve(v)
        rep = SolveReport()
        x = solve_spd(self.pair.mass, v, self.options, rep)
        self.reports.append(rep)
        return x

    def _pinv(self, v):
        """``L~^+ v``: deflated solve ``L g = B (v - mean_B v)``."""
        if self.stiffness_factor is not None:
            B = self.pair.mass
            return self.stiffness_factor.solve(B @ remove_mean(B, v))
        rep = SolveReport()
        g = solve_deflated(self.pair.stiffness, self.pair.mass, v, self.options, rep)
        self.reports.append(rep)
        return g

    def power(self, f, i: int):
        """``L~^i f``."""
        if i < 0:
            raise ValueError("power must be non-negative")
        g = np.asarray(f, dtype=float)
        for _ in range(i):
            g = self._mass_solve(self.pair.stiffness @ g)
        return g

    def pinv_power(self, f, i: int):
        """``(L~^+)^i f``; the result is B-orthogonal to constants for ``i >= 1``."""
        if i < 1:
            raise ValueError("pseudo-inverse power must be at least 1")
        g = np.asarray(f, dtype=float)
        for _ in range(i):
            g = self._pinv(g)
        return g

    # -- filtered operator ---------------------------------------------------

    def apply(self, f):
        """``c(L~) f`` for a field or a block of fields (one per column)."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n_vertices or f.ndim > 2:
            raise ValueError(f"field must have {self.n_vertices} rows")
        if self.path == "canonical":
            return self._apply_canonical(f)
        return self._apply_factored(f)

    def _apply_canonical(self, f):
        a, b = self.filter.a, self.filter.b
        u = a[0] * f if len(a) else np.zeros_like(f)
        g = f
        for i in range(1, len(a)):
            g = self._mass_solve(self.pair.stiffness @ g)
            if a[i] != 0:
                u = u + a[i] * g
        h = f
        for i in range(len(b)):
            h = self._pinv(h)
            if b[i] != 0:
                u = u + b[i] * h
        return u

    def _apply_num(self, fac, v):
        # (L~/scale - re) v  or  (L~/scale)^2 v - 2 re (L~/scale) v + abs2 v
        Mv = self._mass_solve(self.pair.stiffness @ v) / self._scale
        if fac.kind == "linear":
            return Mv - fac.re * v
        MMv = self._mass_solve(self.pair.stiffness @ Mv) / self._scale
        return MMv - 2 * fac.re * Mv + fac.abs2 * v

    def _apply_den(self, fac, v):
        rhs = fac.sign * (self.pair.mass @ v)
        if isinstance(fac.system, Factorization):
            return fac.system.solve(rhs)
        return fac.system(rhs)

    def _apply_factored(self, f):
        v = f
        for _ in range(self._pole_order):
            v = self._pinv(v)
        num, den = list(self._num), list(self._den)
        while num or den:
            if num:
                v = self._apply_num(num.pop(0), v)
            if den:
                v = self._apply_den(den.pop(0), v)
        return self._gain * v

    # -- derived quantities --------------------------------------------------

    def b_norm(self, U):
        U = np.asarray(U, dtype=float)
        BU = self.pair.mass @ U
        return np.sqrt(np.maximum(np.sum(U * BU, axis=0), 0.0))

    def report(self) -> dict:
        iters = [r.iterations for r in self.reports]
        res = [r.residual for r in self.reports]
        out = dict(self.info)
        out["iterative_solves"] = len(iters)
        if iters:
            out["max_iterations"] = int(max(iters))
            out["max_relative_residual"] = float(max(res))
        return out


def _check_vertex(ev, *idx):
    for i in idx:
        if not 0 <= int(i) < ev.n_vertices:
            raise IndexError(f"vertex {i} out of range for {ev.n_vertices} vertices")


def _diffusion_fit(filter: Filter, degree, lam):
    """Fit ``exp(-x)`` on ``[0, X]`` with ``X >= t lam`` rounded up to a power of two,
    then rescale to the variable ``s = x / t``. The same fit serves every
    mesh whose ``t lam`` falls under the same cap.
    """
    t = float(filter.t)
    cap = 2.0 ** math.ceil(math.log2(max(t * lam, 2.0 ** -10)))
    unit = fit_rational(Filter("diffusion", t=1.0), degree, (0.0, cap))
    num = unit.numerator * t ** np.arange(len(unit.numerator))
    den = unit.denominator * t ** np.arange(len(unit.denominator))
    return RationalFilter(num, den, (0.0, cap / t), unit.sigma, filter.to_dict(), unit.converged, unit.ratio)


def fit_for_pair(filter: Filter, pair: LaplacianPair, degree=DEFAULT_DEGREE, lam: float | None = None):
    """Rational approximation of ``1/rho`` valid on the whole spectrum of ``pair``.

    Returns a :class:`CanonicalRationalFilter` when ``1/rho`` is a negative
    power of ``s`` and a :class:`RationalFilter` otherwise.
    """
    lam = spectrum_bound(pair) if lam is None else lam
    if filter.exact_power is not None:
        return exact_canonical(filter, lam)
    if filter.kind == "diffusion":
        return _diffusion_fit(filter, degree, lam)
    return fit_rational(filter, degree, (0.0, lam))


def spectrum_bound(pair: LaplacianPair) -> float:
    """Upper bound on the spectrum of ``L~``: row-sum bound for lumped mass, inflated Lanczos estimate otherwise."""
    if pair.mass_is_diagonal:
        return lambda_max_bound(pair)
    return lambda_max_estimate(pair)


def build_evaluator(pair: LaplacianPair, filter, degree=DEFAULT_DEGREE, options: SolveOptions | None = None,
                    lam: float | None = None) -> SpectralEvaluator:
    """Prepare a spectrum-free evaluator.

    ``filter`` may be an analytic :class:`Filter` (fitted here), a
    :class:`RationalFilter` or a :class:`CanonicalRationalFilter`. The
    canonical path is used whenever the rational function converts exactly;
    otherwise the factored-denominator path is used.
    """
    options = options or SolveOptions(method="direct-cholesky")
    t0 = time.perf_counter()
    lam = spectrum_bound(pair) if lam is None else float(lam)
    source = filter if isinstance(filter, Filter) else None
    rat = fit_for_pair(filter, pair, degree, lam) if source is not None else filter
    if rat.interval[1] < lam * (1 - 1e-12):
        raise IntervalMismatchError(
            f"filter interval ends at {rat.interval[1]:.6g} but the spectrum may reach {lam:.6g}"
        )
    fit_time = time.perf_counter() - t0
    info = {"lambda_max_bound": lam, "sigma": float(rat.sigma), "fit_seconds": fit_time,
            "filter": rat.source, "degree": list(degree)}
    path_reason = None
    canon = rat if isinstance(rat, CanonicalRationalFilter) else None
    if canon is None:
        try:
            canon = to_canonical(rat)
        except (IllConditionedBasisError, NotRepresentableError) as err:
            path_reason = str(err)
    direct = options.method == "direct-cholesky"
    B, L = pair.mass, pair.stiffness
    mass_factor = factorize(B, tag="mass") if (direct or pair.mass_is_diagonal) else None
    d = B.diagonal()
    info["mass_condition"] = float(d.max() / d.min()) if pair.mass_is_diagonal else None
    ev = SpectralEvaluator(pair, canon if canon is not None else rat, options, lam,
                           "canonical" if canon is not None else "factored", mass_factor=mass_factor, info=info)
    needs_pinv = (canon is not None and len(canon.b) > 0) or (canon is None and rat.pole_order > 0)
    if needs_pinv and direct:
        ev.stiffness_factor = factorize(L, mass=B, tag="stiffness")
    if needs_pinv:
        info["stiffness_condition"] = _deflated_condition(pair, lam)
    if canon is not None:
        _check_zero_order(canon, rat.source if source is None else source.to_dict())
    else:
        info["path_reason"] = path_reason
        _prepare_factored(ev, rat)
        if source is not None and source.kind == "diffusion":
            info["kernel_condition_bound"] = kappa_bound(source, lam)
    info["path"] = ev.path
    info["setup_seconds"] = time.perf_counter() - t0
    info["factorizations"] = [f.stats() for f in (ev.mass_factor, ev.stiffness_factor) if f is not None]
    info["factorizations"] += [fac.system.stats() for fac in ev._den if hasattr(fac.system, "stats")]
    return ev


def _check_zero_order(canon, source: dict):
    kind = source.get("kind") if source else None
    if kind is None:
        return
    try:
        zero = Filter.from_dict(source).zero_order
    except (KeyError, ValueError):
        return
    if zero > 0 and len(canon.a) and abs(canon.a[0]) > 1e-12 * max(1.0, np.max(np.abs(canon.b), initial=0.0)):
        warnings.warn("rho vanishes at 0 but the rational filter keeps an identity term a_0 != 0", RuntimeWarning)


def _deflated_condition(pair, lam):
    """``lambda_max / lambda_2`` of ``L~`` (the effective condition of the deflated solve)."""
    from scipy.sparse.linalg import eigsh

    n = pair.n_vertices
    if n <= 3:
        return None
    try:
        w = eigsh(pair.stiffness, k=2, M=pair.mass, sigma=-1e-8 * lam, which="LM", return_eigenvectors=False)
    except Exception:
        return None
    lam2 = float(np.max(w))
    return float(lam / lam2) if lam2 > 0 else None


def _prepare_factored(ev: SpectralEvaluator, rat: RationalFilter):
    pair = ev.pair
    scale = rat.interval[1]
    k = rat.pole_order
    num_y = rat.numerator * scale ** np.arange(len(rat.numerator))
    den_y = rat.regular_denominator * scale ** np.arange(len(rat.regular_denominator))
    gn, num = _real_factors(num_y)
    gd, den = _real_factors(den_y)
    # c(s) = s^-k p(s) / q(s); s^-k comes from the pseudo-inverse powers, p and q are taken in y = s / scale
    ev._gain = gn / gd
    ev._scale = scale
    ev._pole_order = k
    ev._num = num
    B, L = pair.mass, pair.stiffness
    Ls = L / scale
    conds = []
    for fac in den:
        if fac.kind == "linear":
            w = fac.re
            if 0.0 <= w <= 1.0:
                raise PoleInIntervalError(f"denominator root {w * scale:.6g} lies in the spectrum interval")
            if w > 1.0:
                A, fac.sign = w * B - Ls, -1.0
            else:
                A = Ls - w * B
            conds.append(max(abs(1 - w), abs(w)) / min(abs(1 - w), abs(w)))
            fac.system = _shifted_solver(ev, sparse.csc_matrix(A), f"linear({w:.4g})")
        else:
            a, m = fac.re, fac.abs2
            b2 = m - a * a
            ys = np.linspace(0, 1, 2001)
            vals = (ys - a) ** 2 + b2
            conds.append(float(vals.max() / vals.min()))
            if pair.mass_is_diagonal:
                dinv = sparse.diags(1.0 / pair.mass_diagonal)
                A = sparse.csc_matrix(Ls @ dinv @ Ls - 2 * a * Ls + m * B)
                fac.system = _shifted_solver(ev, A, f"quadratic({a:.4g},{m:.4g})")
            else:
                fac.system = _implicit_quadratic(ev, Ls, a, m)
    ev._den = den
    ev.info["shifted_system_conditions"] = conds


def _shifted_solver(ev, A, tag):
    if ev.options.method == "direct-cholesky":
        return factorize(A, tag=tag)

    def solve(rhs):
        rep = SolveReport()
        x = solve_spd(A, rhs, ev.options, rep)
        ev.reports.append(rep)
        return x

    return solve


def _implicit_quadratic(ev, Ls, a, m):
    """``(L B^-1 L - 2a L + m B) x = rhs`` by CG, with ``B^-1`` applied through the mass solver."""
    B = ev.pair.mass
    n = ev.n_vertices

    def matvec(x):
        return Ls @ ev._mass_solve(Ls @ x) - 2 * a * (Ls @ x) + m * (B @ x)

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    lumped = np.asarray(B.sum(axis=1)).ravel()
    Ld = Ls.diagonal()
    diag = Ld**2 / lumped - 2 * a * Ld + m * B.diagonal()
    diag = np.where(diag > 0, diag, 1.0)

    def solve(rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 2:
            return np.column_stack([solve(c) for c in rhs.T])
        rep = SolveReport()
        x = conjugate_gradient(op, rhs, tol=min(ev.options.tol, 1e-12), maxiter=ev.options.maxiter,
                               diag=diag, report=rep)
        ev.reports.append(rep)
        return x

    return solve


# -- module-level operations ---------------------------------------------------


def _bare_evaluator(pair, options):
    options = options or SolveOptions(method="direct-cholesky")
    ev = SpectralEvaluator(pair, None, options, float("nan"), "canonical")
    if options.method == "direct-cholesky" or pair.mass_is_diagonal:
        ev.mass_factor = factorize(pair.mass, tag="mass")
    return ev


def apply_power(pair: LaplacianPair, f, i: int, options: SolveOptions | None = None):
    """``L~^i f`` by ``i`` steps of ``B g <- L g``."""
    return _bare_evaluator(pair, options).power(f, i)


def apply_pinv_power(pair: LaplacianPair, f, i: int, options: SolveOptions | None = None):
    """``(L~^+)^i f`` by ``i`` deflated solves."""
    ev = _bare_evaluator(pair, options)
    if ev.options.method == "direct-cholesky":
        ev.stiffness_factor = factorize(pair.stiffness, mass=pair.mass, tag="stiffness")
    return ev.pinv_power(f, i)


def apply_operator(ev: SpectralEvaluator, f):
    """``c(L~) f``, the spectrum-free approximation of the filtered operator applied to ``f``."""
    return ev.apply(f)


def _sources(ev, idx, source):
    idx = np.atleast_1d(idx)
    E = np.zeros((ev.n_vertices, len(idx)))
    E[idx, np.arange(len(idx))] = 1.0
    if source == "unit-mass":
        return ev._mass_solve(E)
    if source != "indicator":
        raise ValueError(f"unknown point source {source!r}; choose 'indicator' or 'unit-mass'")
    return E


def kernel_column(ev: SpectralEvaluator, i: int, source: str = "indicator"):
    """Column ``i`` of the kernel of ``1/rho``, i.e. ``c(L~) e_i``.

    ``source="unit-mass"`` applies the kernel to ``B^-1 e_i`` instead, a point
    source of unit integral whose response does not scale with local area.
    """
    _check_vertex(ev, i)
    return ev.apply(_sources(ev, i, source))[:, 0]


def distance(ev: SpectralEvaluator, i: int, j: int, source: str = "indicator") -> float:
    """``|| c(L~) (e_i - e_j) ||_B``."""
    _check_vertex(ev, i, j)
    S = _sources(ev, [i, j], source)
    if i == j:
        return 0.0
    return float(ev.b_norm(ev.apply(S[:, 0] - S[:, 1])))


def distance_field(ev: SpectralEvaluator, seed: int, source: str = "indicator", batch: int = BATCH):
    """Distances from ``seed`` to every vertex.

    By linearity ``c(L~)(e_s - e_j) = k_s - k_j`` with ``k_j`` the kernel
    columns, so the field is assembled from blocks of kernel columns that all
    reuse the cached factorizations.
    """
    _check_vertex(ev, seed)
    n = ev.n_vertices
    ks = kernel_column(ev, seed, source)
    out = np.empty(n)
    for start in range(0, n, batch):
        idx = np.arange(start, min(start + batch, n))
        U = ks[:, None] - ev.apply(_sources(ev, idx, source))
        out[idx] = ev.b_norm(U)
    out[seed] = 0.0
    return out
