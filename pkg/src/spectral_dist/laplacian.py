"""Cotangent stiffness and linear-FEM mass matrices, and bounds on the top eigenvalue."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.io import mmwrite
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .mesh import TriangleMesh

MASS_SCHEMES = ("barycentric-lumped", "full-fem")


class UnsupportedSchemeError(ValueError):
    pass


class NonConvergenceWarning(RuntimeWarning):
    pass


def _cotangents(mesh):
    """Cotangent of the angle at each corner, shape ``(m, 3)``."""
    v, t = mesh.vertices, mesh.triangles
    cots = np.empty(t.shape)
    for c in range(3):
        a = v[t[:, c]]
        u = v[t[:, (c + 1) % 3]] - a
        w = v[t[:, (c + 2) % 3]] - a
        cots[:, c] = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
    return cots


def stiffness_matrix(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Cotangent stiffness matrix ``L``, symmetric positive semi-definite.

    ``L[i, j] = -(cot a_ij + cot b_ij) / 2`` for an edge with opposite angles
    ``a_ij, b_ij`` (a single term on boundary edges), and each diagonal entry
    makes its row sum zero.
    """
    t = mesh.triangles
    cots = _cotangents(mesh)
    rows, cols, vals = [], [], []
    for c in range(3):
        i, j = t[:, (c + 1) % 3], t[:, (c + 2) % 3]
        rows.append(np.minimum(i, j))
        cols.append(np.maximum(i, j))
        vals.append(-0.5 * cots[:, c])
    n = mesh.n_vertices
    upper = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    upper.sum_duplicates()
    off = upper + upper.T
    diag = -np.asarray(off.sum(axis=1)).ravel()
    L = (off + sparse.diags(diag)).tocsr()
    L.sort_indices()
    return L


def mass_matrix(mesh: TriangleMesh, scheme: str = "barycentric-lumped") -> sparse.csr_matrix:
    """Mass matrix ``B``: lumped (one third of incident area per vertex) or linear FEM."""
    t = mesh.triangles
    a = mesh.triangle_areas
    n = mesh.n_vertices
    if scheme == "barycentric-lumped":
        d = np.bincount(t.ravel(), weights=np.repeat(a / 3, 3), minlength=n)
        return sparse.diags(d).tocsr()
    if scheme == "full-fem":
        rows, cols, vals = [], [], []
        for c in range(3):
            i, j = t[:, c], t[:, (c + 1) % 3]
            rows.append(np.minimum(i, j))
            cols.append(np.maximum(i, j))
            vals.append(a / 12)
        upper = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        d = np.bincount(t.ravel(), weights=np.repeat(a / 6, 3), minlength=n)
        B = (upper + upper.T + sparse.diags(d)).tocsr()
        B.sort_indices()
        return B
    raise UnsupportedSchemeError(f"unknown mass scheme {scheme!r}; choose from {MASS_SCHEMES}")


@dataclass(frozen=True, eq=False)
class LaplacianPair:
    """Stiffness ``L`` and mass ``B``; the Laplacian ``B^-1 L`` is never formed."""

    stiffness: sparse.csr_matrix
    mass: sparse.csr_matrix
    mass_is_diagonal: bool

    @property
    def n_vertices(self) -> int:
        return self.stiffness.shape[0]

    @property
    def mass_diagonal(self) -> np.ndarray:
        return self.mass.diagonal()

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())


def laplacian_pair(mesh: TriangleMesh, scheme: str = "barycentric-lumped") -> LaplacianPair:
    return LaplacianPair(stiffness_matrix(mesh), mass_matrix(mesh, scheme), scheme == "barycentric-lumped")


def lambda_max_bound(pair: LaplacianPair) -> float:
    """Upper bound on the largest eigenvalue of ``B^-1 L`` from absolute row/column sums."""
    if not pair.mass_is_diagonal:
        raise UnsupportedSchemeError(
            "the row-sum bound needs a diagonal mass matrix; use lambda_max_estimate"
        )
    absL = abs(pair.stiffness)
    inv_b = 1.0 / pair.mass_diagonal
    row = inv_b * np.asarray(absL.sum(axis=1)).ravel()
    col = np.asarray(absL.T @ inv_b).ravel()
    return float(min(row.max(), col.max()))


def lambda_max_estimate(pair: LaplacianPair, tol: float = 1e-8, maxiter: int = 500) -> float:
    """Lanczos estimate of the largest eigenvalue of ``L x = lambda B x``.

    The converged value is inflated by ``1 + 10 tol`` so it bounds the true
    eigenvalue. If Lanczos does not converge a :class:`NonConvergenceWarning`
    is issued and the row-sum bound is returned (lumped mass), or the last
    Ritz value inflated by 1% otherwise.
    """
    L, B = pair.stiffness, pair.mass
    if pair.n_vertices <= 3:
        from scipy.linalg import eigh

        return float(eigh(L.toarray(), B.toarray(), eigvals_only=True)[-1] * (1 + 10 * tol))
    v0 = np.ones(pair.n_vertices) + np.linspace(0, 1, pair.n_vertices)
    try:
        if pair.mass_is_diagonal:
            # symmetric form D^-1/2 L D^-1/2 avoids an inner mass solve
            s = 1.0 / np.sqrt(pair.mass_diagonal)
            C = sparse.diags(s) @ L @ sparse.diags(s)
            lam = eigsh(C, k=1, which="LA", tol=tol, maxiter=maxiter, v0=v0,
                        return_eigenvectors=False)
        else:
            lam = eigsh(L, k=1, M=B, which="LA", tol=tol, maxiter=maxiter, v0=v0,
                        return_eigenvectors=False)
    except ArpackNoConvergence as err:
        fallback = "row-sum bound" if pair.mass_is_diagonal else "last Ritz value + 1%"
        warnings.warn(f"lambda_max_estimate did not converge ({err}); using the {fallback}",
                      NonConvergenceWarning)
        if pair.mass_is_diagonal:
            return lambda_max_bound(pair)
        if len(err.eigenvalues):
            return float(np.max(err.eigenvalues)) * 1.01
        raise
    return float(lam[0]) * (1 + 10 * tol)


def export_matrix_market(matrix, path) -> None:
    mmwrite(str(path), sparse.coo_matrix(matrix), symmetry="symmetric")
