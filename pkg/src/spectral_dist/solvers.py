"""Sparse symmetric solves: SPD systems, and least-squares solves with a singular Laplacian."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .laplacian import NonConvergenceWarning


class SolverError(RuntimeError):
    pass


class IndefiniteMatrixError(SolverError):
    pass


class DisconnectedMeshError(SolverError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    """``tol`` is relative to the right-hand side; ``maxiter=None`` means ``10 n``."""

    tol: float = 1e-10
    maxiter: int | None = None
    preconditioner: str = "jacobi"
    method: str = "conjugate-gradient"

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.method not in ("conjugate-gradient", "direct-cholesky"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "converged": self.converged}


def conjugate_gradient(A, b, tol=1e-10, maxiter=None, diag=None, x0=None, report=None):
    """Preconditioned CG for symmetric positive (semi-)definite ``A``.

    ``A`` may be a sparse matrix or any object with ``@``. ``diag`` enables the
    Jacobi preconditioner. Returns the best iterate; ``report`` (a
    :class:`SolveReport`) receives the iteration count and relative residual.
    Raises :class:`IndefiniteMatrixError` when a search direction has
    non-positive curvature.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    inv_d = None if diag is None else 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    report = SolveReport() if report is None else report
    if bnorm == 0:
        report.iterations, report.residual, report.converged = 0, 0.0, True
        return np.zeros(n)
    z = r if inv_d is None else inv_d * r
    p = z.copy()
    rz = r @ z
    best, best_res = x.copy(), np.linalg.norm(r) / bnorm
    it = 0
    while best_res > tol and it < maxiter:
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            if curv < -1e-14 * np.linalg.norm(p) * np.linalg.norm(Ap):
                raise IndefiniteMatrixError("non-positive curvature: matrix is not positive definite")
            break
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best, best_res = x.copy(), res
        z = r if inv_d is None else inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.iterations = it
    report.residual = float(best_res)
    report.converged = bool(best_res <= tol)
    return best


def remove_mean(B, f):
    """B-orthogonal projection against constants: ``f - (1'Bf / 1'B1) 1``.

    Works column-wise on 2-D input.
    """
    w = np.asarray(B.sum(axis=0)).ravel()
    f = np.asarray(f, dtype=float)
    return f - (w @ f) / w.sum()


def _jacobi(A, opts):
    return A.diagonal() if opts.preconditioner == "jacobi" else None


def solve_spd(A, rhs, opts: SolveOptions | None = None, report: SolveReport | None = None) -> np.ndarray:
    """Solve ``A x = rhs`` for sparse SPD ``A``.

    Non-convergence returns the best iterate and issues a
    :class:`NonConvergenceWarning` (``report.converged`` is False).
    """
    opts = opts or SolveOptions()
    report = SolveReport() if report is None else report
    rhs = np.asarray(rhs, dtype=float)
    if sparse.issparse(A) and _is_diagonal(A):
        report.iterations, report.residual, report.converged = 0, 0.0, True
        d = A.diagonal()
        return rhs / (d if rhs.ndim == 1 else d[:, None])
    if rhs.ndim == 2:
        return np.column_stack([solve_spd(A, c, opts, report) for c in rhs.T])
    if opts.method == "direct-cholesky":
        x = factorize(A).solve(rhs)
        _record_residual(A, x, rhs, report)
        return x
    x = conjugate_gradient(A, rhs, tol=opts.tol, maxiter=opts.maxiter, diag=_jacobi(A, opts), report=report)
    if not report.converged:
        warnings.warn(
            f"CG stopped after {report.iterations} iterations at residual {report.residual:.2e}",
            NonConvergenceWarning,
        )
    return x


def solve_deflated(L, B, rhs, opts: SolveOptions | None = None, report: SolveReport | None = None) -> np.ndarray:
    """Least-squares solution of ``L g = B g0`` with ``g0`` the B-mean-free part of ``rhs``.

    The result is B-orthogonal to constants. ``L`` must have a one-dimensional
    kernel (connected mesh); stagnation of CG on an inconsistent system raises
    :class:`DisconnectedMeshError`.
    """
    opts = opts or SolveOptions()
    report = SolveReport() if report is None else report
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 2 and opts.method != "direct-cholesky":
        return np.column_stack([solve_deflated(L, B, c, opts, report) for c in rhs.T])
    g0 = remove_mean(B, rhs)
    b = B @ g0
    # 1'B g0 = 0 exactly in exact arithmetic; strip the round-off part, which is outside range(L)
    b = b - b.mean(axis=0)
    scale = np.abs(B @ rhs).max() if rhs.size else 0.0
    if np.abs(b).max() <= 1e-14 * scale:
        report.iterations, report.residual, report.converged = 0, 0.0, True
        return np.zeros_like(b)
    if opts.method == "direct-cholesky":
        g = factorize(L, mass=B).solve(b)
        _record_residual(L, g, b, report)
        return g
    g = conjugate_gradient(L, b, tol=opts.tol, maxiter=opts.maxiter, diag=_jacobi(L, opts), report=report)
    if not report.converged:
        raise DisconnectedMeshError(
            f"deflated solve stagnated at residual {report.residual:.2e} after "
            f"{report.iterations} iterations; is the mesh connected?"
        )
    return remove_mean(B, g)


def _record_residual(A, x, b, report):
    bn = np.linalg.norm(b)
    report.iterations = 0
    report.residual = float(np.linalg.norm(A @ x - b) / bn) if bn > 0 else 0.0
    report.converged = True


def _is_diagonal(A):
    A = sparse.csr_matrix(A)
    return A.nnz == np.count_nonzero(A.diagonal()) and (A - sparse.diags(A.diagonal())).count_nonzero() == 0


@dataclass(eq=False)
class Factorization:
    """Reusable sparse factorization of a symmetric matrix.

    For a singular Laplacian (``mass`` given) the last vertex is grounded, the
    reduced SPD system is factored, and solutions are projected to be
    B-orthogonal to constants. ``solve`` accepts 1-D or 2-D right-hand sides.
    """

    tag: str
    size: int
    nnz_matrix: int
    nnz_factor: int
    _lu: object = field(repr=False)
    _diag: np.ndarray | None = field(default=None, repr=False)
    _mass: object = field(default=None, repr=False)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._diag is not None:
            return b / (self._diag if b.ndim == 1 else self._diag[:, None])
        if self._mass is None:
            return self._lu.solve(b)
        x = np.zeros_like(b)
        x[:-1] = self._lu.solve(b[:-1])
        return remove_mean(self._mass, x)

    def stats(self) -> dict:
        return {"tag": self.tag, "size": self.size, "nnz_matrix": self.nnz_matrix, "nnz_factor": self.nnz_factor}


def factorize(A, mass=None, tag: str = "") -> Factorization:
    """Factor sparse symmetric ``A``; pass ``mass`` when ``A`` is a singular Laplacian."""
    A = sparse.csc_matrix(A)
    n = A.shape[0]
    if mass is None and _is_diagonal(A):
        d = A.diagonal()
        if np.any(d <= 0):
            raise IndefiniteMatrixError("diagonal matrix has non-positive entries")
        return Factorization(tag or "diagonal", n, A.nnz, n, None, _diag=d)
    target = A[:-1, :-1] if mass is not None else A
    try:
        lu = splu(sparse.csc_matrix(target), permc_spec="MMD_AT_PLUS_A",
                  diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError as err:
        raise SolverError(f"factorization failed: {err}") from err
    nnz = lu.L.nnz + lu.U.nnz
    return Factorization(tag or ("laplacian" if mass is not None else "spd"), n, A.nnz, nnz, lu, _mass=mass)
