"""Penalised energy, its gradient, constraint residuals and Lagrange multipliers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import DirichletOperator, Grid
from .specfun import SpectralCost, gram_pair, phi_matrix, phi_weights, psi_grad

EPS_REG = 1e-14


@dataclass
class PartitionState:
    """All groups' frames on one grid, with the penalty parameters.

    ``groups[i]`` is a (k_i, n_dof) array whose rows are the fields of group i.
    """

    op: DirichletOperator
    groups: list
    costs: list
    beta: float = 0.0
    q: float = 2.0

    def __post_init__(self):
        self.groups = [np.atleast_2d(np.asarray(U, dtype=float)) for U in self.groups]
        if len(self.costs) != len(self.groups):
            raise ValueError("one cost per group is required")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        for U in self.groups:
            if U.shape[1] != self.op.n_dof:
                raise ValueError("field length does not match the operator")

    @property
    def grid(self) -> Grid:
        return self.op.grid

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def ks(self) -> list:
        return [U.shape[0] for U in self.groups]

    def copy(self, **changes) -> "PartitionState":
        groups = changes.pop("groups", self.groups)
        return replace(self, groups=[np.array(U, dtype=float) for U in groups], **changes)


@dataclass
class MultiplierSet:
    mu: list  # per group, symmetric k_i x k_i
    weights: list  # per group, psi_grad at the H1 Gram diagonal


def group_density(frame) -> np.ndarray:
    U = np.atleast_2d(frame)
    return np.einsum("kn,kn->n", U, U)


def _powers(state):
    dens = [group_density(U) for U in state.groups]
    half = state.q / 2.0
    if half == 1.0:
        pw = dens
    else:
        pw = [d**half for d in dens]
    return dens, pw


def penalty_term(state: PartitionState) -> float:
    """(2 beta / q) * integral of sum_{i<j} density_i^(q/2) density_j^(q/2)."""
    if state.beta == 0 or state.m < 2:
        return 0.0
    _, pw = _powers(state)
    P = np.array(pw)
    S = P.sum(axis=0)
    pair = 0.5 * (S * S - np.einsum("in,in->n", P, P))
    return 2.0 * state.beta / state.q * state.grid.h**2 * float(pair.sum())


def overlap_integral(state: PartitionState) -> float:
    """Penalty term divided by beta (zero when beta is zero)."""
    if state.beta == 0:
        s = state.copy(beta=1.0)
        return penalty_term(s)
    return penalty_term(state) / state.beta


def spectral_part(state: PartitionState) -> float:
    return float(sum(phi_matrix(c, gram_pair(U, state.op).H1gram) for U, c in zip(state.groups, state.costs)))


def energy_beta(state: PartitionState) -> float:
    return spectral_part(state) + penalty_term(state)


def _coupling(state, dens, pw):
    """beta * density_i^(q/2-1) * sum_{j != i} density_j^(q/2), per group."""
    S = np.sum(pw, axis=0)
    out = []
    for d, p in zip(dens, pw):
        others = S - p
        if state.q == 2.0:
            out.append(state.beta * others)
        else:
            out.append(state.beta * (d + EPS_REG) ** (state.q / 2.0 - 1.0) * others)
    return out


def energy_and_gradient(state: PartitionState):
    """Energy and its h^2-weighted L2 gradient, one (k_i, n_dof) array per group."""
    L = state.op.matrix
    h2 = state.grid.h**2
    total = 0.0
    grads = []
    LUs = []
    for U, cost in zip(state.groups, state.costs):
        LU = (L @ U.T).T
        M = h2 * (LU @ U.T)
        M = 0.5 * (M + M.T)
        total += phi_matrix(cost, M)
        W, _ = phi_weights(cost, M)
        grads.append(2.0 * (W @ LU))
        LUs.append(LU)
    if state.beta > 0 and state.m > 1:
        dens, pw = _powers(state)
        total += penalty_term(state)
        for g, U, c in zip(grads, state.groups, _coupling(state, dens, pw)):
            g += 2.0 * U * c
    return total, grads


def energy_gradient(state: PartitionState):
    return energy_and_gradient(state)[1]


def multipliers(state: PartitionState) -> MultiplierSet:
    """mu^i_{jl} = delta_jl a_j M_jj + beta h^2 sum u_j u_l density_i^(q/2-1) sum_{r!=i} density_r^(q/2)."""
    h2 = state.grid.h**2
    mus, weights = [], []
    if state.beta > 0 and state.m > 1:
        dens, pw = _powers(state)
        coup = _coupling(state, dens, pw)
    else:
        coup = [None] * state.m
    for U, cost, c in zip(state.groups, state.costs, coup):
        M = gram_pair(U, state.op).H1gram
        diag = np.diag(M).copy()
        a = psi_grad(cost, diag)
        mu = np.diag(a * diag)
        if c is not None:
            B = h2 * ((U * c) @ U.T)
            # mirror the upper triangle so that mu is symmetric bit for bit
            B = np.triu(B) + np.triu(B, 1).T
            mu = mu + B
        mus.append(mu)
        weights.append(a)
    return MultiplierSet(mus, weights)


def constraint_residual(state: PartitionState):
    """Per group: (max |L2gram - I|, max |offdiag H1gram|)."""
    out = []
    for U in state.groups:
        gp = gram_pair(U, state.op)
        k = U.shape[0]
        l2 = float(np.abs(gp.L2gram - np.eye(k)).max())
        off = gp.H1gram - np.diag(np.diag(gp.H1gram))
        out.append((l2, float(np.abs(off).max()) if k > 1 else 0.0))
    return out
