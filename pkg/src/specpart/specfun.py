"""Symmetric spectral costs and frame diagonalisation.

A cost acts on the vector of Dirichlet energies of one group's fields. Its
matrix extension ``phi(M) = psi(eigenvalues of M)`` is invariant under
``M -> P^T M P``; on diagonal matrices the two coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DirichletOperator

KINDS = ("power_sum", "product", "plain_sum")


@dataclass(frozen=True)
class SpectralCost:
    kind: str = "plain_sum"
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "power_sum" and not self.p >= 1:
            raise ValueError(f"power_sum needs p >= 1, got {self.p}")

    def with_p(self, p: float) -> "SpectralCost":
        if self.kind != "power_sum":
            return self
        return SpectralCost(self.kind, float(p))

    def __str__(self):
        if self.kind == "power_sum":
            return f"power_sum(p={self.p:g})"
        return self.kind


def _positive(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or xi.size == 0:
        raise ValueError("cost argument must be a nonempty vector")
    if np.any(~(xi > 0)):
        raise ValueError(f"cost arguments must be positive, got {xi}")
    return xi


def psi_eval(cost: SpectralCost, xi) -> float:
    xi = _positive(xi)
    if cost.kind == "plain_sum":
        return float(xi.sum())
    if cost.kind == "product":
        return float(np.prod(xi))
    top = xi.max()
    return float(top * np.sum((xi / top) ** cost.p) ** (1.0 / cost.p))


def psi_grad(cost: SpectralCost, xi) -> np.ndarray:
    """Partial derivatives of psi; all strictly positive on the open orthant."""
    xi = _positive(xi)
    if cost.kind == "plain_sum":
        return np.ones_like(xi)
    if cost.kind == "product":
        return np.array([np.prod(np.delete(xi, i)) for i in range(xi.size)])
    # d/dxi_l (sum xi^p)^(1/p) = (xi_l / psi)^(p-1)
    return (xi / psi_eval(cost, xi)) ** (cost.p - 1.0)


def phi_matrix(cost: SpectralCost, M) -> float:
    """Rotation-invariant extension of psi to symmetric positive definite matrices."""
    M = np.asarray(M, dtype=float)
    if cost.kind == "product":
        return float(np.linalg.det(M))
    if cost.kind == "plain_sum":
        return float(np.trace(M))
    return psi_eval(cost, np.linalg.eigvalsh(M))


def phi_weights(cost: SpectralCost, M):
    """Gradient of phi at a symmetric M, as a symmetric k x k matrix.

    Uses ``dphi/dM = P diag(psi_grad(eig)) P^T`` with ``M = P diag(eig) P^T``.
    Returns (weight matrix, eigenvalues ascending).
    """
    M = np.asarray(M, dtype=float)
    if cost.kind == "plain_sum":
        return np.eye(M.shape[0]), np.sort(np.diag(M))
    lam, P = jacobi_eigh(M)
    W = (P * psi_grad(cost, lam)) @ P.T
    return 0.5 * (W + W.T), lam


@dataclass
class GramPair:
    L2gram: np.ndarray
    H1gram: np.ndarray


def gram_pair(frame, op: DirichletOperator) -> GramPair:
    """L2 and H1 Gram matrices of a (k, n_dof) frame; the latter is M(u)."""
    U = np.atleast_2d(frame)
    h2 = op.grid.h**2
    G = h2 * (U @ U.T)
    LU = (op.matrix @ U.T).T
    M = h2 * (LU @ U.T)
    return GramPair(0.5 * (G + G.T), 0.5 * (M + M.T))


def jacobi_eigh(A, tol: float = 1e-15, max_sweeps: int = 64):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns ascending eigenvalues and the orthogonal matrix of eigenvectors
    (columns). Ties keep their original index order.
    """
    A = np.array(A, dtype=float)
    k = A.shape[0]
    V = np.eye(k)
    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(k), V
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(k)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
                A[p, q] = A[q, p] = 0.0
                V = V @ R
    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


def diagonalize_frame(frame, op: DirichletOperator, ortho_tol: float = 1e-8):
    """Rotate an L2-orthonormal frame so that its H1 Gram matrix is diagonal.

    Returns (rotated frame, P) with ``rotated = P^T frame``; rows ordered by
    ascending Dirichlet energy, first significant entry of each row >= 0.
    """
    U = np.atleast_2d(np.asarray(frame, dtype=float))
    gp = gram_pair(U, op)
    dev = np.abs(gp.L2gram - np.eye(U.shape[0])).max()
    if dev > ortho_tol:
        raise ValueError(f"frame is not L2-orthonormal (max |G - I| = {dev:.3e})")
    _, P = jacobi_eigh(gp.H1gram)
    V = P.T @ U
    for r in range(V.shape[0]):
        row = V[r]
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0:
            V[r] = -row
            P[:, r] = -P[:, r]
    return V, P
