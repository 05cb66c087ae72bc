"""Lowest Dirichlet eigenpairs of a (sub)mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .errors import EigensolverError, EmptyCellError
from .grid import DirichletOperator, assemble_laplacian

DENSE_LIMIT = 400


@dataclass
class EigenResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # (k, n_dof), L2-orthonormal on the cell grid
    residuals: np.ndarray  # ||L v - lambda v||_{L2}
    grid: object = None


def _l2_normalize(vecs, h):
    # eigsh/eigh return Euclidean-orthonormal columns; rescale to h^2-weighted norm.
    return vecs / h


def lowest_eigenpairs(
    operator: DirichletOperator,
    submask=None,
    k: int = 1,
    tol: float = 1e-8,
    seed: int = 0,
    v0=None,
    maxiter: int | None = None,
) -> EigenResult:
    """k lowest eigenpairs of ``operator`` restricted to ``submask`` dofs.

    Implicitly restarted Lanczos (ARPACK, smallest-algebraic mode, no
    factorisation). Two guard vectors beyond k are requested so that a
    degenerate eigenvalue at the edge of the wanted block is resolved with
    its full multiplicity. ``v0`` (a lattice-free dof vector or a stack of
    them) seeds the Krylov space; a stack is summed.
    """
    grid = operator.grid
    if submask is not None:
        submask = np.asarray(submask, dtype=bool)
        if not submask.any():
            raise EmptyCellError("empty cell: submask has no nodes")
        operator = assemble_laplacian(grid.restrict(submask))
        grid = operator.grid
    n = operator.n_dof
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, n_dof={n}]")
    h = grid.h
    A = operator.matrix
    n_req = min(k + 2, n)
    if n <= DENSE_LIMIT or n_req >= n - 1:
        w, V = la.eigh(A.toarray())
        w, V = w[:k], V[:, :k]
    else:
        if v0 is None:
            start = np.random.default_rng(seed).standard_normal(n)
        else:
            start = np.atleast_2d(np.asarray(v0, dtype=float)).sum(axis=0)
        try:
            w, V = sla.eigsh(A, k=n_req, which="SA", tol=tol * 1e-3, v0=start, maxiter=maxiter)
        except sla.ArpackNoConvergence as exc:
            vals = np.asarray(exc.eigenvalues)
            vecs = np.asarray(exc.eigenvectors)
            res = np.linalg.norm(A @ vecs - vecs * vals, axis=0) if vals.size else np.array([])
            raise EigensolverError(
                f"eigensolver did not converge; best relative residuals {res / np.maximum(np.abs(vals), 1e-300)}",
                residuals=res,
                values=vals,
            ) from exc
        order = np.argsort(w, kind="stable")
        w, V = w[order][:k], V[:, order][:, :k]
        # Rayleigh-Ritz on the returned block removes residual non-orthogonality.
        Q, _ = np.linalg.qr(V)
        w, S = la.eigh(Q.T @ (A @ Q))
        V = Q @ S
    vecs = _l2_normalize(V, h).T
    vecs = _fix_signs(vecs)
    res = np.linalg.norm(A @ vecs.T - vecs.T * w, axis=0) * h
    rel = res / np.maximum(np.abs(w), 1e-300)
    if np.any(rel > tol):
        raise EigensolverError(
            f"eigenpair residuals {rel} exceed tol={tol}", residuals=res, values=w
        )
    return EigenResult(values=np.asarray(w), vectors=vecs, residuals=res, grid=grid)


def _fix_signs(vecs):
    for row in vecs:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return vecs
