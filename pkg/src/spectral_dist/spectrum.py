"""Truncated-eigendecomposition backend: generalized eigenpairs and filtered sums over modes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .filters import Filter
from .laplacian import LaplacianPair

DENSE_LIMIT = 3000
ZERO_RTOL = 1e-14
# "indicator": e_i as the point source; "unit-mass": B^-1 e_i, which has unit integral
SOURCES = ("indicator", "unit-mass")


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    """First ``k`` generalized eigenpairs of ``L x = lambda B x`` with ``X' B X = I``.

    ``eigenvectors`` holds one column per mode. ``mass`` is kept so that
    B-inner products with indicator fields are available as rows of ``B X``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass: sparse.spmatrix = field(repr=False)
    _bx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_bx", np.asarray(self.mass @ self.eigenvectors))
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def total_n(self) -> int:
        return self.eigenvectors.shape[0]

    def coefficients(self, f) -> np.ndarray:
        """``<x_l, f>_B`` for every retained mode."""
        return self._bx.T @ np.asarray(f, dtype=float)

    def point_coefficients(self, source: str = "indicator") -> np.ndarray:
        """Row ``i`` holds ``<x_l, s_i>_B`` for the point source ``s_i`` at vertex ``i``."""
        if source == "indicator":
            return self._bx
        if source == "unit-mass":
            return self.eigenvectors
        raise ValueError(f"unknown point source {source!r}; choose from {SOURCES}")

    def truncate(self, k: int) -> "Spectrum":
        if not 1 <= k <= self.n_modes:
            raise ValueError(f"k must be in [1, {self.n_modes}]")
        return Spectrum(self.eigenvalues[:k].copy(), self.eigenvectors[:, :k].copy(), self.mass)


def _fix_signs(X):
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1
    return X * s


def eigendecompose(pair: LaplacianPair, k: int) -> Spectrum:
    """Smallest ``k`` eigenpairs of the pencil ``(L, B)``.

    Dense generalized solver up to 3000 vertices; Lanczos in shift-invert mode
    above. Eigenvalues below ``1e-10 * lambda_max`` are set to zero, and each
    eigenvector has its largest-magnitude entry made positive.
    """
    n = pair.n_vertices
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    L, B = pair.stiffness, pair.mass
    if n <= DENSE_LIMIT:
        if pair.mass_is_diagonal:
            d = pair.mass_diagonal
            s = 1.0 / np.sqrt(d)
            A = (L.toarray() * s[:, None]) * s[None, :]
            w, V = sla.eigh(A, subset_by_index=[0, k - 1])
            X = V * s[:, None]
        else:
            w, X = sla.eigh(L.toarray(), B.toarray(), subset_by_index=[0, k - 1])
        scale = abs(w[-1]) if k == n else float(np.max(np.abs(L.diagonal()) / B.diagonal()))
    else:
        scale = float(np.max(np.abs(L.diagonal()) / B.diagonal()))
        try:
            w, X = eigsh(sparse.csc_matrix(L), k=k, M=sparse.csc_matrix(B), sigma=-1e-8 * scale,
                         which="LM", tol=1e-12)
        except ArpackNoConvergence as err:
            raise EigensolverError(f"Lanczos did not converge for k={k}") from err
        order = np.argsort(w)
        w, X = w[order], X[:, order]
        # B-orthonormalise against round-off in clustered modes
        G = X.T @ (B @ X)
        X = X @ np.linalg.inv(np.linalg.cholesky(G)).T
    w = np.where(np.abs(w) <= 1e-10 * scale, 0.0, w)
    w = np.maximum(w, 0.0)
    return Spectrum(np.ascontiguousarray(w), np.ascontiguousarray(_fix_signs(X)), B)


def _inverse_weights(spec: Spectrum, filter: Filter) -> np.ndarray:
    """``1/rho(lambda_l)`` with modes where rho is numerically zero dropped.

    A mode is null when ``|rho| <= 1e-14 sup|rho|``, the sup taken over the
    spectrum up to the first positive eigenvalue: the only place the built-in
    filters vanish is ``s = 0``, and a sup over the whole spectrum would let
    fast-growing filters (diffusion at large ``t lambda``) null every mode.
    """
    lam = spec.eigenvalues
    with np.errstate(over="ignore"):
        rho = np.asarray(filter(lam), dtype=float)
    pos = np.flatnonzero(lam > 0)
    head = rho[: pos[0] + 1] if len(pos) else rho
    sup = np.max(np.abs(head))
    keep = np.abs(rho) > ZERO_RTOL * sup
    out = np.zeros_like(lam)
    out[keep] = filter.inverse(lam[keep])
    return out


def _check_vertex(spec, *idx):
    for i in idx:
        if not 0 <= int(i) < spec.total_n:
            raise IndexError(f"vertex {i} out of range for {spec.total_n} vertices")


def truncated_distance(spec: Spectrum, filter: Filter, i: int, j: int, source: str = "indicator") -> float:
    """``sqrt(sum_l <x_l, e_i - e_j>_B^2 / rho(lambda_l)^2)`` over the retained modes.

    With ``source="unit-mass"`` the indicators are replaced by ``B^-1 e_i``
    and the inner products become ``x_l(i) - x_l(j)``.
    """
    _check_vertex(spec, i, j)
    C = spec.point_coefficients(source)
    if i == j:
        return 0.0
    c = C[i] - C[j]
    return float(np.sqrt(np.sum((c * _inverse_weights(spec, filter)) ** 2)))


def truncated_distance_field(spec: Spectrum, filter: Filter, seed: int, source: str = "indicator") -> np.ndarray:
    """``truncated_distance(spec, filter, seed, j)`` for every vertex ``j``."""
    _check_vertex(spec, seed)
    C = spec.point_coefficients(source)
    W = (C[seed][None, :] - C) * _inverse_weights(spec, filter)
    d = np.sqrt(np.sum(W**2, axis=1))
    d[seed] = 0.0
    return d


def truncated_kernel_column(spec: Spectrum, filter: Filter, i: int, source: str = "indicator") -> np.ndarray:
    """``X rho^+(Lambda) X' B e_i`` (``e_i`` replaced by ``B^-1 e_i`` for unit-mass sources)."""
    _check_vertex(spec, i)
    C = spec.point_coefficients(source)
    return spec.eigenvectors @ (_inverse_weights(spec, filter) * C[i])


def residual_bound_check(spec: Spectrum, pair: LaplacianPair, f, n_modes: int) -> dict:
    """Compare the B-norm of the residual of projecting ``f`` on ``n_modes`` modes
    with the energy bound ``f' L f / lambda_{n_modes+1}``.
    """
    if not 0 <= n_modes < spec.n_modes:
        raise ValueError(f"n_modes must be below the number of computed modes ({spec.n_modes})")
    lam_next = float(spec.eigenvalues[n_modes])
    if lam_next <= 0:
        raise ValueError("the next eigenvalue must be positive")
    f = np.asarray(f, dtype=float)
    c = spec.coefficients(f)[:n_modes]
    r = f - spec.eigenvectors[:, :n_modes] @ c
    lhs = float(r @ (pair.mass @ r))
    energy = float(f @ (pair.stiffness @ f))
    rhs = energy / lam_next
    return {"residual_norm_sq": lhs, "bound": rhs, "n_modes": n_modes,
            "next_eigenvalue": lam_next, "holds": bool(lhs <= rhs + 1e-9)}


def eigenvalue_clusters(values, rel_spread: float = 0.05) -> list[np.ndarray]:
    """Group sorted values whose spread within a group is at most ``rel_spread`` of the group mean."""
    values = np.asarray(values, dtype=float)
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[start] > rel_spread * max(abs(values[start]), 1e-300):
            groups.append(np.arange(start, i))
            start = i
    return groups


def save_spectrum(spec: Spectrum, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.eigenvalues.csv`` and ``<prefix>.eigenvectors.txt`` (ASCII, full precision)."""
    prefix = Path(prefix)
    vals = prefix.with_name(prefix.name + ".eigenvalues.csv")
    vecs = prefix.with_name(prefix.name + ".eigenvectors.txt")
    np.savetxt(vals, spec.eigenvalues, fmt="%.17g", delimiter=",")
    np.savetxt(vecs, spec.eigenvectors, fmt="%.17g")
    return vals, vecs


def load_spectrum(prefix, pair: LaplacianPair) -> Spectrum:
    prefix = Path(prefix)
    w = np.atleast_1d(np.loadtxt(prefix.with_name(prefix.name + ".eigenvalues.csv"), delimiter=","))
    X = np.loadtxt(prefix.with_name(prefix.name + ".eigenvectors.txt"), ndmin=2)
    if X.shape != (pair.n_vertices, len(w)):
        raise ValueError(f"eigenvector file has shape {X.shape}, expected {(pair.n_vertices, len(w))}")
    return Spectrum(w, X, pair.mass)
