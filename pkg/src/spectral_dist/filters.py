"""Spectral filters and near-best rational approximations of their reciprocals.

A filter ``rho`` weights the Laplacian spectrum; kernels and distances use
``1/rho``. The spectrum-free evaluator needs ``1/rho`` as a rational function,
either in the canonical basis ``{s^i} U {s^-i}`` or as ``p(s) / q(s)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath as mp
import numpy as np
from numpy.polynomial import polynomial as P

from .laplacian import NonConvergenceWarning

FILTER_KINDS = (
    "commute-time",
    "biharmonic",
    "power",
    "diffusion",
    "mexican-hat",
    "log-composite",
    "custom-rational",
)

# Canonical interpolation nodes start at this fraction of the interval (s^-i is singular at 0).
CANONICAL_LOWER = 1e-4
REMEZ_RATIO = 0.9
REMEZ_MAXITER = 50


class PoleInIntervalError(ValueError):
    pass


class IllConditionedBasisError(ValueError):
    pass


class NotRepresentableError(ValueError):
    pass


@dataclass(frozen=True)
class Filter:
    """A spectral filter ``rho(s)``, ``s >= 0``.

    ``t`` is the diffusion scale, ``p`` the exponent of ``power``. A
    ``custom-rational`` filter is ``rho = numerator(s) / denominator(s)`` with
    ascending coefficients.
    """

    kind: str
    t: float | None = None
    p: float | None = None
    numerator: tuple = ()
    denominator: tuple = ()

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; choose from {FILTER_KINDS}")
        if self.kind == "diffusion" and not (self.t is not None and self.t > 0):
            raise ValueError("diffusion filter needs a scale t > 0")
        if self.kind == "power" and not (self.p is not None and self.p >= 1):
            raise ValueError("power filter needs an exponent p >= 1")
        if self.kind == "custom-rational":
            if not self.numerator or not self.denominator:
                raise ValueError("custom-rational filter needs numerator and denominator coefficients")
            object.__setattr__(self, "numerator", tuple(float(c) for c in self.numerator))
            object.__setattr__(self, "denominator", tuple(float(c) for c in self.denominator))
            if self.denominator[0] == 0:
                raise ValueError("custom-rational denominator must be non-zero at s = 0")

    @property
    def zero_order(self) -> float:
        """Order of the zero of ``rho`` at ``s = 0`` (the pole order of ``1/rho``)."""
        if self.kind == "commute-time":
            return 1.0
        if self.kind == "biharmonic":
            return 2.0
        if self.kind == "power":
            return float(self.p)
        if self.kind == "mexican-hat":
            return 0.5
        if self.kind == "log-composite":
            return 3.0
        if self.kind == "custom-rational":
            nz = np.flatnonzero(np.asarray(self.numerator) != 0)
            return float(nz[0]) if len(nz) else 0.0
        return 0.0

    @property
    def exact_power(self) -> int | None:
        """``k`` when ``1/rho = s^-k`` exactly, else None."""
        order = {"commute-time": 1, "biharmonic": 2}.get(self.kind)
        if order is None and self.kind == "power" and float(self.p).is_integer():
            order = int(self.p)
        return order

    def __call__(self, s):
        s = _check_nonneg(s)
        with np.errstate(over="ignore"):
            if self.kind == "commute-time":
                return s * 1.0
            if self.kind == "biharmonic":
                return s**2
            if self.kind == "power":
                return s**self.p
            if self.kind == "diffusion":
                return np.exp(self.t * s)
            if self.kind == "mexican-hat":
                return np.sqrt(s) * np.exp(s**2)
            if self.kind == "log-composite":
                return s**2 * np.log1p(s)
            return P.polyval(s, self.numerator) / P.polyval(s, self.denominator)

    def inverse(self, s):
        """``1/rho(s)``, with 0 where ``rho`` vanishes (pseudo-inverse convention)."""
        s = _check_nonneg(s)
        if self.kind == "diffusion":
            return np.exp(-self.t * s)
        if self.kind == "mexican-hat":
            with np.errstate(divide="ignore"):
                out = np.exp(-(s**2)) / np.sqrt(s)
        elif self.kind == "custom-rational":
            with np.errstate(divide="ignore"):
                out = P.polyval(s, self.denominator) / P.polyval(s, self.numerator)
        else:
            with np.errstate(divide="ignore"):
                out = 1.0 / self(s)
        return np.where(np.isfinite(out), out, 0.0)

    def scaled_inverse(self, s, k: int):
        """``s^k / rho(s)``, continuous at ``s = 0`` when ``k >= zero_order``."""
        s = _check_nonneg(s)
        if k == 0:
            return self.inverse(s)
        if self.kind in ("commute-time", "biharmonic", "power"):
            return s ** (k - self.zero_order)
        if self.kind == "mexican-hat":
            return s ** (k - 0.5) * np.exp(-(s**2))
        if self.kind == "log-composite":
            # s^k / (s^2 log(1+s)) with s / log1p(s) -> 1 at 0
            ratio = np.where(s > 0, s / np.log1p(np.where(s > 0, s, 1.0)), 1.0)
            return s ** (k - 3) * ratio
        if self.kind == "custom-rational":
            z = int(self.zero_order)
            reduced = np.asarray(self.numerator)[z:]
            return s ** (k - z) * P.polyval(s, self.denominator) / P.polyval(s, reduced)
        return s**k * self.inverse(s)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.t is not None:
            d["t"] = self.t
        if self.p is not None:
            d["p"] = self.p
        if self.kind == "custom-rational":
            d["numerator"] = list(self.numerator)
            d["denominator"] = list(self.denominator)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Filter":
        return cls(d["kind"], d.get("t"), d.get("p"), tuple(d.get("numerator", ())), tuple(d.get("denominator", ())))


def _check_nonneg(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("filters are defined for s >= 0")
    return s


def evaluate(filter: Filter, s):
    """``rho(s)``; raises ``ValueError`` for negative ``s``."""
    out = filter(s)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class RationalFilter:
    """``c(s) = p(s) / q(s)`` approximating ``1/rho`` on ``interval``.

    Coefficients are ascending in ``s``. ``q`` may carry a factor ``s^k`` (a pole
    at 0 that the pseudo-inverse deflates); the remaining factor is normalised
    to ``q_reg(0) = 1``. ``sigma`` is the sup error of ``s^k c(s)`` against
    ``s^k / rho(s)`` (the plain error when ``k = 0``).
    """

    numerator: np.ndarray
    denominator: np.ndarray
    interval: tuple
    sigma: float
    source: dict = field(default_factory=dict)
    converged: bool = True
    ratio: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "numerator", np.asarray(self.numerator, dtype=float))
        object.__setattr__(self, "denominator", np.asarray(self.denominator, dtype=float))
        object.__setattr__(self, "interval", (float(self.interval[0]), float(self.interval[1])))

    @property
    def degree(self) -> tuple[int, int]:
        return len(self.numerator) - 1, len(self.denominator) - 1

    @property
    def pole_order(self) -> int:
        return int(np.flatnonzero(self.denominator != 0)[0])

    @property
    def regular_denominator(self) -> np.ndarray:
        return self.denominator[self.pole_order:]

    def regular(self, s):
        """``s^k c(s) = p(s) / q_reg(s)``."""
        return P.polyval(s, self.numerator) / P.polyval(s, self.regular_denominator)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = self.pole_order
        if k == 0:
            return self.regular(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.regular(s) / s**k

    def to_json(self) -> str:
        return json.dumps({
            "kind": "rational",
            "degree": list(self.degree),
            "interval": list(self.interval),
            "coeffs": {"numerator": self.numerator.tolist(), "denominator": self.denominator.tolist()},
            "sigma": self.sigma,
            "filter": self.source,
            "converged": self.converged,
            "ratio": self.ratio,
        })


@dataclass(frozen=True, eq=False)
class CanonicalRationalFilter:
    """``sum_i a_i s^i + sum_i b_i s^-i`` (``a`` from power 0, ``b`` from power 1)."""

    a: np.ndarray
    b: np.ndarray
    interval: tuple
    sigma: float = 0.0
    residual: float = 0.0
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "interval", (float(self.interval[0]), float(self.interval[1])))

    @property
    def degree(self) -> tuple[int, int]:
        return len(self.a) - 1, len(self.b)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = P.polyval(s, self.a) if len(self.a) else np.zeros_like(s)
        if len(self.b):
            with np.errstate(divide="ignore"):
                inv = 1.0 / s
            out = out + inv * P.polyval(inv, self.b)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "kind": "canonical",
            "degree": list(self.degree),
            "interval": list(self.interval),
            "coeffs": {"a": self.a.tolist(), "b": self.b.tolist()},
            "sigma": self.sigma,
            "residual": self.residual,
            "filter": self.source,
        })


def from_json(text: str):
    """Inverse of ``to_json`` for both rational representations."""
    d = json.loads(text)
    c = d["coeffs"]
    if d["kind"] == "canonical":
        return CanonicalRationalFilter(c["a"], c["b"], tuple(d["interval"]), d["sigma"],
                                       d.get("residual", 0.0), d.get("filter", {}))
    if d["kind"] == "rational":
        return RationalFilter(c["numerator"], c["denominator"], tuple(d["interval"]), d["sigma"],
                              d.get("filter", {}), d.get("converged", True), d.get("ratio", 1.0))
    raise ValueError(f"unknown rational filter kind {d['kind']!r}")


# ----------------------------------------------------------------------------
# fitting


def _cheb01(n):
    return 0.5 * (1 - np.cos(np.pi * np.arange(n) / (n - 1)))


def _error_grid():
    # dense near 0 where decaying targets vary fastest
    return np.unique(np.concatenate([[0.0], _cheb01(20001), np.geomspace(1e-10, 1, 5000)]))


def _lawson(F, y, l, r, iters=60):
    """Linearised least squares at Chebyshev nodes, refined by Lawson reweighting."""
    Vp = y[:, None] ** np.arange(l + 1)
    Vq = y[:, None] ** np.arange(r + 1)
    w = np.full(len(y), 1.0 / len(y))
    qabs = np.ones(len(y))
    best = None
    for _ in range(iters):
        A = np.hstack([Vp, -F[:, None] * Vq]) * (np.sqrt(w) / qabs)[:, None]
        cn = np.linalg.norm(A, axis=0)
        cn[cn == 0] = 1.0
        _, _, vt = np.linalg.svd(A / cn, full_matrices=False)
        c = vt[-1] / cn
        beta, alpha = c[: l + 1], c[l + 1:]
        if alpha[0] == 0:
            break
        beta, alpha = beta / alpha[0], alpha / alpha[0]
        q = Vq @ alpha
        e = F - (Vp @ beta) / q
        err = np.max(np.abs(e))
        if not np.all(q > 0):
            err = np.inf
        if best is None or err < best[0]:
            best = (err, beta, alpha)
        if err == 0:
            break
        qabs = np.abs(q)
        w = w * np.abs(e)
        w = w / w.sum() if w.sum() > 0 else np.full(len(y), 1.0 / len(y))
    return best


def _alternating_extrema(e, N):
    """Indices of at most ``N`` alternating local extrema of ``e`` with the largest magnitudes."""
    s = np.where(e >= 0, 1, -1)
    cuts = np.flatnonzero(np.diff(s)) + 1
    idx = [seg[np.argmax(np.abs(e[seg]))] for seg in np.split(np.arange(len(e)), cuts)]
    while len(idx) > N:
        a = np.abs(e[idx])
        if len(idx) - N == 1:
            idx.pop(0 if a[0] < a[-1] else -1)
            continue
        k = int(np.argmin(a))
        if k in (0, len(idx) - 1):
            idx.pop(k)
        else:
            # dropping an interior extremum merges its two neighbours; keep the larger
            nb = k - 1 if a[k - 1] < a[k + 1] else k + 1
            for j in sorted((k, nb), reverse=True):
                idx.pop(j)
    return np.array(idx, dtype=int)


def _reference_solve(target_mp, x, l, r, q_prev):
    """Solve ``p(x_k) - f_k q(x_k) = (-1)^k E q(x_k)`` at the reference points.

    The small dense system is badly conditioned in floating point when the
    reference spans many decades, so it is solved in extended precision with
    the nonlinearity in ``E q`` handled by fixed-point iteration.
    """
    N = l + r + 2
    with mp.workdps(40):
        xs = [mp.mpf(float(v)) for v in x]
        fs = [target_mp(v) for v in xs]
        qp = [mp.mpf(float(v)) for v in q_prev]
        E_old = None
        for _ in range(12):
            A = mp.matrix(N, N)
            rhs = mp.matrix(N, 1)
            for k in range(N):
                for i in range(l + 1):
                    A[k, i] = xs[k] ** i
                for i in range(1, r + 1):
                    A[k, l + i] = -fs[k] * xs[k] ** i
                A[k, N - 1] = -((-1) ** k) * qp[k]
                rhs[k] = fs[k]
            c = mp.lu_solve(A, rhs)
            alpha = [mp.mpf(1)] + [c[l + i] for i in range(1, r + 1)]
            E = c[N - 1]
            qp = [mp.polyval(alpha[::-1], v) for v in xs]
            if E_old is not None and abs(E - E_old) <= mp.mpf(10) ** -20 * (abs(E) + mp.mpf(10) ** -30):
                break
            E_old = E
        beta = np.array([float(c[i]) for i in range(l + 1)])
        alpha = np.array([float(v) for v in alpha])
    return beta, alpha


def _roots_in_unit(coef, tol=1e-10) -> bool:
    if len(coef) < 2 or not np.any(coef[1:]):
        return False
    roots = P.polyroots(np.trim_zeros(coef, "b"))
    real = roots[np.abs(roots.imag) <= tol * (1 + np.abs(roots))].real
    return bool(np.any((real >= -tol) & (real <= 1 + tol)))


def _remez(target, target_mp, l, r, beta, alpha):
    grid = _error_grid()
    F = target(grid)
    scale = max(np.max(np.abs(F)), 1e-300)
    N = l + r + 2

    def err_of(b, a):
        q = P.polyval(grid, a)
        if not (np.all(q > 0) or np.all(q < 0)):
            return None, np.inf
        e = F - P.polyval(grid, b) / q
        return e, np.max(np.abs(e))

    e, sup = err_of(beta, alpha)
    best = (sup, beta, alpha, 0.0, False)
    for _ in range(REMEZ_MAXITER):
        if sup <= 1e-13 * scale:
            return sup, beta, alpha, 1.0, True
        idx = _alternating_extrema(e, N)
        ratio = float(np.min(np.abs(e[idx])) / sup)
        if sup <= best[0]:
            best = (sup, beta, alpha, ratio, ratio >= REMEZ_RATIO and len(idx) == N)
        if len(idx) < N or ratio >= REMEZ_RATIO:
            break
        try:
            nb, na = _reference_solve(target_mp, grid[idx], l, r, P.polyval(grid[idx], alpha))
        except ZeroDivisionError:
            break
        ne, nsup = err_of(nb, na)
        if ne is None:
            break
        beta, alpha, e, sup = nb, na, ne, nsup
    else:
        idx = _alternating_extrema(e, N)
        ratio = float(np.min(np.abs(e[idx])) / sup)
        if sup <= best[0]:
            best = (sup, beta, alpha, ratio, ratio >= REMEZ_RATIO and len(idx) == N)
    return best


def _targets(filter, k, lam):
    """Float and mpmath versions of ``y -> (lam y)^k / rho(lam y)`` on ``y in [0, 1]``."""

    def target(y):
        return filter.scaled_inverse(lam * np.asarray(y), k)

    if filter.kind == "diffusion":
        tl = filter.t * lam

        def target_mp(y):
            return mp.exp(-tl * y)
    else:
        def target_mp(y):
            return mp.mpf(float(target(float(y))))
    return target, target_mp


def fit_rational(filter: Filter, degree: tuple[int, int], interval: tuple[float, float]) -> RationalFilter:
    """Near-best rational approximation of ``1/rho`` of type ``(l, r)`` on ``[0, lam]``.

    Starts from a Lawson-reweighted linearised fit at Chebyshev nodes, then
    runs Remez exchange until the error equioscillation ratio reaches 0.9 (or
    50 steps). ``1/rho = s^-k`` filters are returned exactly. A pole of ``1/rho``
    at 0 of order ``k`` is split off, and ``s^k / rho`` is fitted with type
    ``(l, r - k)``.
    """
    l, r = (int(d) for d in degree)
    lo, lam = (float(v) for v in interval)
    if l < 0 or r < 0:
        raise ValueError("degrees must be non-negative")
    if lo != 0 or not lam > 0:
        raise ValueError("fitting interval must be [0, lam] with lam > 0")
    src = filter.to_dict()
    exact = filter.exact_power
    if exact is not None:
        if exact > r:
            raise ValueError(f"1/rho has a pole of order {exact} at 0 but r = {r}")
        return RationalFilter([1.0], [0.0] * exact + [1.0], (0.0, lam), 0.0, src)
    k = math.ceil(filter.zero_order)
    if k > r:
        raise ValueError(f"1/rho has a pole of order {filter.zero_order} at 0 but r = {r}")
    sigma, beta_y, alpha_y, ratio, ok = _fit_unit_interval(filter, l, r - k, lam, k)
    if not ok:
        warnings.warn(
            f"rational fit of {src} stopped at ratio {ratio:.3f}, sigma {sigma:.3e}",
            NonConvergenceWarning,
        )
    # back to the variable s = lam y; the s^k factor joins the denominator
    beta = beta_y / lam ** np.arange(l + 1)
    alpha = alpha_y / lam ** np.arange(r - k + 1)
    alpha = np.concatenate([np.zeros(k), alpha])
    return RationalFilter(beta, alpha, (0.0, lam), float(sigma), src, bool(ok), float(ratio))


@lru_cache(maxsize=64)
def _fit_unit_interval(filter, l, r, lam, k):
    f, f_mp = _targets(filter, k, lam)
    y0 = np.unique(np.concatenate([_cheb01(2000), np.geomspace(1e-9, 1, 500)]))
    F0 = f(y0)
    init = _lawson(F0, y0, l, r)
    if init is None or not np.isfinite(init[0]):
        raise PoleInIntervalError("could not find a pole-free initial rational fit")
    _, beta, alpha = init
    sigma, beta, alpha, ratio, ok = _remez(f, f_mp, l, r, beta, alpha)
    if _roots_in_unit(alpha):
        raise PoleInIntervalError("denominator vanishes on the fitting interval")
    return sigma, beta, alpha, ratio, ok


def rational_error(rat: RationalFilter, filter: Filter, grid_size: int = 1000) -> float:
    """Sup over a uniform grid of ``|s^k (c(s) - 1/rho(s))|`` (``k`` = pole order of ``c``)."""
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    s = np.linspace(rat.interval[0], rat.interval[1], grid_size)
    k = rat.pole_order
    return float(np.max(np.abs(rat.regular(s) - filter.scaled_inverse(s, k))))


def to_canonical(rat: RationalFilter, allow_projection: bool = False) -> CanonicalRationalFilter:
    """Rewrite ``c = p/q`` as ``sum a_i s^i + sum b_i s^-i``.

    A monomial denominator is divided out exactly. Otherwise the coefficients
    come from interpolation at ``l + r + 1`` Chebyshev nodes of
    ``[1e-4 lam, lam]``; if that does not reproduce ``c`` to 1e-8 relative,
    :class:`NotRepresentableError` is raised unless ``allow_projection`` asks
    for the least-squares projection instead.
    """
    l, r = rat.degree
    lam = rat.interval[1]
    nz = np.flatnonzero(rat.denominator)
    if len(nz) == 1:
        k = int(nz[0])
        gamma = rat.denominator[k]
        a = np.zeros(max(l - k, 0) + 1)
        b = np.zeros(r)
        for j, beta in enumerate(rat.numerator):
            if j >= k:
                a[j - k] += beta / gamma
            else:
                b[k - j - 1] += beta / gamma
        return CanonicalRationalFilter(a, b, rat.interval, rat.sigma, 0.0, rat.source)

    def basis(s):
        s = np.asarray(s)
        cols = [s**i for i in range(l + 1)] + [s ** (-i) for i in range(1, r + 1)]
        return np.column_stack(cols)

    lo = CANONICAL_LOWER * lam
    nodes = lo + (lam - lo) * _cheb01(l + r + 1) if l + r > 0 else np.array([lam])
    V = basis(nodes)
    colscale = np.max(np.abs(V), axis=0)
    Vs = V / colscale
    cond = np.linalg.cond(Vs)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedBasisError(
            f"canonical interpolation matrix has condition {cond:.2e} > 1e12; lower the degree"
        )
    coef = np.linalg.solve(Vs, rat(nodes)) / colscale
    check = np.linspace(lo, lam, 1000)
    target = rat(check)
    resid = float(np.max(np.abs(basis(check) @ coef - target)) / np.max(np.abs(target)))
    if resid > 1e-8:
        if not allow_projection:
            raise NotRepresentableError(
                f"c(s) is not in span of the canonical basis (residual {resid:.2e}); "
                "pass allow_projection=True for a least-squares projection"
            )
        W = basis(check)
        ws = np.max(np.abs(W), axis=0)
        coef = np.linalg.lstsq(W / ws, target, rcond=None)[0] / ws
        resid = float(np.max(np.abs(W @ coef - target)) / np.max(np.abs(target)))
    return CanonicalRationalFilter(coef[: l + 1], coef[l + 1:], rat.interval, rat.sigma, resid, rat.source)


def exact_canonical(filter: Filter, lam: float) -> CanonicalRationalFilter:
    """Canonical form of ``1/rho = s^-k`` (commute-time, biharmonic, integer powers)."""
    k = filter.exact_power
    if k is None:
        raise ValueError(f"{filter.kind} has no exact canonical form")
    b = np.zeros(k)
    b[-1] = 1.0
    return CanonicalRationalFilter([0.0], b, (0.0, lam), 0.0, 0.0, filter.to_dict())


def kappa_bound(filter: Filter, lam: float, n_grid: int = 2001) -> float:
    """``sup rho / rho(0)`` on ``[0, lam]``, the condition bound of ``rho(L~)`` for increasing ``rho``."""
    s = np.linspace(0, lam, n_grid)
    vals = filter(s)
    return float(np.max(vals) / vals[0])


__all__ = [
    "Filter", "RationalFilter", "CanonicalRationalFilter", "evaluate", "fit_rational",
    "to_canonical", "rational_error", "exact_canonical", "from_json", "kappa_bound",
    "PoleInIntervalError", "IllConditionedBasisError", "NotRepresentableError", "FILTER_KINDS",
]
