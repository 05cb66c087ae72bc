"""Projected gradient descent on products of L2-Stiefel manifolds with beta/p continuation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    MultiplierSet,
    PartitionState,
    constraint_residual,
    energy_and_gradient,
    group_density,
    multipliers,
    overlap_integral,
    penalty_term,
)
from .errors import FrameCollapseError, GroupExtinctionError
from .grid import DirichletOperator, Grid, assemble_laplacian
from .specfun import SpectralCost, diagonalize_frame, gram_pair

log = logging.getLogger(__name__)


@dataclass
class ContinuationSchedule:
    beta_ladder: np.ndarray
    p_ladder: np.ndarray = field(default_factory=lambda: np.array([1.0, 2.0, 4.0, 8.0]))
    max_iter: int = 4000
    gtol: float = 1e-6
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    warm_start: bool = True

    def __post_init__(self):
        self.beta_ladder = np.atleast_1d(np.asarray(self.beta_ladder, dtype=float))
        self.p_ladder = np.atleast_1d(np.asarray(self.p_ladder, dtype=float))
        for name in ("beta_ladder", "p_ladder"):
            lad = getattr(self, name)
            if lad.size == 0 or np.any(np.diff(lad) <= 0):
                raise ValueError(f"{name} must be nonempty and strictly increasing")
        if np.any(self.beta_ladder < 0):
            raise ValueError("beta_ladder entries must be >= 0")
        if np.any(self.p_ladder < 1):
            raise ValueError("p_ladder entries must be >= 1")
        if not (self.gtol > 0 and 0 < self.armijo_c < 1 and 0 < self.shrink < 1 and self.max_iter > 0):
            raise ValueError("tolerances and line-search parameters must be positive")


def geometric_ladder(beta_min: float, beta_max: float, ratio: float = 2.0) -> np.ndarray:
    n = int(np.floor(np.log(beta_max / beta_min) / np.log(ratio) + 1e-9)) + 1
    return beta_min * ratio ** np.arange(n)


def default_beta_ladder(h: float, scale: float = 16.0) -> np.ndarray:
    """Powers of two from 1 up to scale / h^2."""
    return geometric_ladder(1.0, scale / h**2, 2.0)


@dataclass
class StageRecord:
    beta: float
    p: float
    energy_start: float
    energy: float
    penalty: float
    overlap: float
    l2_residual: float
    h1_residual: float
    iterations: int
    grad_norm: float
    converged: bool
    line_search_failed: bool
    energy_trace: np.ndarray = field(repr=False, default=None)


@dataclass
class SolveReport:
    stages: list
    multipliers: MultiplierSet
    weights: list
    selection: list  # l_i, 1-based
    discarded: list  # per group, 1-based indices below l_i
    h1_diagonals: list
    eigen_spread: list
    seed: int

    @property
    def final(self) -> StageRecord:
        return self.stages[-1]


def retract(frame, grid: Grid) -> np.ndarray:
    """Symmetric (Loewdin) L2-orthonormalisation: G^(-1/2) V with G = h^2 V V^T."""
    V = np.atleast_2d(np.asarray(frame, dtype=float))
    G = grid.h**2 * (V @ V.T)
    G = 0.5 * (G + G.T)
    s, Q = np.linalg.eigh(G)
    if not s[0] > 1e-12 * max(s[-1], 1e-300):
        raise FrameCollapseError(f"frame collapse: L2 Gram eigenvalues {s}")
    return (Q * s**-0.5) @ Q.T @ V


def tangent_project(grad, frame, grid: Grid) -> np.ndarray:
    """Remove the normal component sym(h^2 G U^T) U at an orthonormal frame U."""
    A = grid.h**2 * (grad @ frame.T)
    return grad - 0.5 * (A + A.T) @ frame


def _norm2(arrays, h2):
    return h2 * sum(float(np.vdot(a, a)) for a in arrays)


def _diagonalize_all(state):
    for i, U in enumerate(state.groups):
        if U.shape[0] > 1:
            state.groups[i], _ = diagonalize_frame(U, state.op, ortho_tol=1e-6)


def minimize_stage(state: PartitionState, beta: float, p: float | None, schedule: ContinuationSchedule):
    """One continuation stage at fixed (beta, p); returns (new state, StageRecord).

    Armijo backtracking on E(retract(U - t PG)). The trial step is the
    Barzilai-Borwein step when available and 1 / (2 max a lambda_max)
    otherwise.
    """
    costs = [c.with_p(p) if p is not None else c for c in state.costs]
    st = state.copy(beta=float(beta), costs=costs)
    grid = st.grid
    h2 = grid.h**2
    lam_max = 8.0 / h2
    E, grads = energy_and_gradient(st)
    E_start = E
    trace = [E]
    pgs = [tangent_project(g, U, grid) for g, U in zip(grads, st.groups)]
    gn2 = _norm2(pgs, h2)
    t_bb = None
    it = 0
    converged = failed = False
    for it in range(1, schedule.max_iter + 1):
        if np.sqrt(gn2) <= schedule.gtol * max(abs(E), 1.0):
            converged = True
            it -= 1
            break
        if t_bb is None:
            amax = max(float(np.max(w)) for w in multipliers(st).weights)
            t = 1.0 / (2.0 * amax * lam_max)
        else:
            t = t_bb
        accepted = False
        for _ in range(schedule.max_backtracks):
            trial_groups = [retract(U - t * g, grid) for U, g in zip(st.groups, pgs)]
            trial = PartitionState(st.op, trial_groups, st.costs, st.beta, st.q)
            E_new, grads_new = energy_and_gradient(trial)
            if E_new <= E - schedule.armijo_c * t * gn2:
                accepted = True
                break
            t *= schedule.shrink
        if not accepted:
            failed = True
            break
        pgs_new = [tangent_project(g, U, grid) for g, U in zip(grads_new, trial_groups)]
        s = [a - b for a, b in zip(trial_groups, st.groups)]
        y = [a - b for a, b in zip(pgs_new, pgs)]
        sy = h2 * sum(float(np.vdot(a, b)) for a, b in zip(s, y))
        ss = _norm2(s, h2)
        t_bb = ss / sy if sy > 0 else None
        st.groups = trial_groups
        E, pgs = E_new, pgs_new
        gn2 = _norm2(pgs, h2)
        trace.append(E)
    else:
        it = schedule.max_iter
        converged = np.sqrt(gn2) <= schedule.gtol * max(abs(E), 1.0)
    _diagonalize_all(st)
    st.groups = [retract(U, grid) for U in st.groups]
    E_end, _ = energy_and_gradient(st)
    res = constraint_residual(st)
    rec = StageRecord(
        beta=float(beta),
        p=float(p) if p is not None else float("nan"),
        energy_start=E_start,
        energy=E_end,
        penalty=penalty_term(st),
        overlap=overlap_integral(st),
        l2_residual=max(r[0] for r in res),
        h1_residual=max(r[1] for r in res),
        iterations=it,
        grad_norm=float(np.sqrt(gn2)),
        converged=bool(converged),
        line_search_failed=failed,
        energy_trace=np.array(trace),
    )
    log.info(
        "stage beta=%g p=%s: E %.10g -> %.10g, %d it, |pg|=%.2e%s",
        beta, p, E_start, E_end, it, rec.grad_norm, " (line search failed)" if failed else "",
    )
    return st, rec


def voronoi_init(op: DirichletOperator, ks, seed: int) -> list:
    """Gaussian random fields supported on the Voronoi cells of m random mask nodes."""
    grid = op.grid
    rng = np.random.default_rng(seed)
    m = len(ks)
    n = grid.n_dof
    if sum(ks) > n:
        raise ValueError(f"sum of k_i = {sum(ks)} exceeds the {n} available nodes")
    xy = grid.dof_coords
    centers = xy[rng.choice(n, size=m, replace=False)]
    d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    owner = np.argmin(d2, axis=1)
    groups = []
    for i, k in enumerate(ks):
        ind = (owner == i).astype(float)
        if ind.sum() < k:
            ind = np.ones(n)
        groups.append(retract(rng.standard_normal((k, n)) * ind, grid))
    return groups


def extinct_groups(state: PartitionState, frac: float = 1e-3) -> list:
    """Groups holding less than ``frac`` of their L2 mass where they dominate."""
    dens = np.array([group_density(U) for U in state.groups])
    owner = np.argmax(dens, axis=0)
    h2 = state.grid.h**2
    out = []
    for i, k in enumerate(state.ks):
        mass = h2 * dens[i][owner == i].sum()
        if mass < frac * k:
            out.append(i)
    return out


def selection_indices(weights, floor_rel: float = 1e-3):
    sel, disc = [], []
    for a in weights:
        a = np.asarray(a)
        l = int(np.flatnonzero(a >= floor_rel * a.max())[0]) + 1
        sel.append(l)
        disc.append(list(range(1, l)))
    return sel, disc


def solve(
    grid: Grid,
    ks,
    cost: SpectralCost,
    schedule: ContinuationSchedule,
    seed: int = 0,
    q: float = 2.0,
    op: DirichletOperator | None = None,
    weight_floor: float = 1e-3,
    initial=None,
):
    """Continuation in p (outer) and beta (inner) from a Voronoi-seeded start.

    Returns (final PartitionState, SolveReport).
    """
    op = op or assemble_laplacian(grid)
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise ValueError("every k_i must be >= 1")
    p_values = list(schedule.p_ladder) if cost.kind == "power_sum" else [None]
    costs = [cost.with_p(p_values[0]) if p_values[0] is not None else cost for _ in ks]
    groups = initial if initial is not None else voronoi_init(op, ks, seed)
    state = PartitionState(op, groups, costs, beta=float(schedule.beta_ladder[0]), q=q)
    stages = []
    for pi, p in enumerate(p_values):
        if pi > 0 and not schedule.warm_start:
            state = PartitionState(op, voronoi_init(op, ks, seed), state.costs, state.beta, q)
        for beta in schedule.beta_ladder:
            state, rec = minimize_stage(state, beta, p, schedule)
            stages.append(rec)
            dead = extinct_groups(state) if state.m > 1 else []
            if dead:
                err = GroupExtinctionError(
                    f"group extinction: group(s) {[d + 1 for d in dead]} vanished at beta={beta:g}"
                )
                err.state = state
                err.stages = stages
                raise err
    mult = multipliers(state)
    sel, disc = selection_indices(mult.weights, weight_floor)
    diags = [np.diag(gram_pair(U, op).H1gram).copy() for U in state.groups]
    spread = [float((d[l - 1 :].max() - d[l - 1 :].min()) / d[l - 1 :].max()) for d, l in zip(diags, sel)]
    report = SolveReport(
        stages=stages,
        multipliers=mult,
        weights=mult.weights,
        selection=sel,
        discarded=disc,
        h1_diagonals=diags,
        eigen_spread=spread,
        seed=seed,
    )
    return state, report
