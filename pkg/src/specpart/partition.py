"""Cell extraction from a converged state and exact eigenvalue audits of the cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .eigensolve import EigenResult, lowest_eigenpairs
from .energy import PartitionState, energy_beta, group_density, penalty_term
from .errors import CellExtinctionError, EigensolverError, EmptyCellError
from .grid import DirichletOperator, Grid
from .specfun import SpectralCost, psi_eval

GAP_LIMIT = 0.05
CONSISTENCY_SLACK = 0.02


@dataclass
class PartitionResult:
    grid: Grid
    cell_masks: list
    interface_mask: np.ndarray
    cell_eigs: list
    objective_relaxed: float
    objective_partition: float
    objective_main: float  # sum of lambda_{k_i}(omega_i)
    lam_k: list
    penalty: float
    weights: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)
    selection: list = field(default_factory=list)


def extract_cells(state: PartitionState, threshold_rel: float = 1e-3, smooth: bool = False):
    """Threshold-and-dominance cell extraction.

    A node belongs to cell i when density_i strictly exceeds every other
    group's density and either exceeds ``threshold_rel`` times its own
    maximum or is the only nonzero density at that node. With
    ``threshold_rel == 0`` the rule is plain argmax, ties going to the lowest
    group index. Returns (cell masks, interface mask) as lattice arrays.
    """
    grid = state.grid
    dens = np.array([group_density(U) for U in state.groups])
    m = dens.shape[0]
    owner = np.argmax(dens, axis=0)
    top = dens[owner, np.arange(dens.shape[1])]
    if threshold_rel > 0:
        if m > 1:
            others = np.where(np.arange(m)[:, None] == owner[None, :], -np.inf, dens).max(axis=0)
        else:
            others = np.zeros_like(top)
        # where every competitor vanishes the node is in the support outright
        ok = (top > others) & ((top > threshold_rel * dens.max(axis=1)[owner]) | (others == 0))
    else:
        ok = top > 0
    if smooth:
        owner, ok = _majority_smooth(grid, owner, ok, m)
    cells = []
    for i in range(m):
        sel = ok & (owner == i)
        if not sel.any():
            raise CellExtinctionError(f"cell extinction: cell {i + 1} is empty after extraction")
        cells.append(grid.to_lattice(sel))
    interface = grid.mask & ~np.any(cells, axis=0)
    return cells, interface


def _majority_smooth(grid, owner, ok, m):
    """One pass of 3x3 majority voting over labels (unassigned counts as a label)."""
    lab = grid.to_lattice(np.where(ok, owner, m).astype(float) + 1.0)
    counts = []
    for c in range(m + 1):
        counts.append(ndimage.uniform_filter((lab == c + 1).astype(float), size=3, mode="constant"))
    counts = np.array(counts)
    best = np.argmax(counts, axis=0)
    new = grid.from_lattice(best)
    return np.minimum(new, m - 1), new < m


def interface_points(grid: Grid, cell_masks, interface_mask) -> np.ndarray:
    """Points of the discrete interface between distinct cells.

    Unassigned nodes that see at least two different cells within a 5x5
    window, plus midpoints of lattice edges joining two different cells.
    """
    m = len(cell_masks)
    label = np.full(grid.mask.shape, -1)
    for i, c in enumerate(cell_masks):
        label[c] = i
    pts = []
    near = np.zeros((m,) + grid.mask.shape, dtype=bool)
    for i, c in enumerate(cell_masks):
        near[i] = ndimage.binary_dilation(c, structure=np.ones((5, 5), dtype=bool))
    multi = (near.sum(axis=0) >= 2) & interface_mask
    jj, ii = np.nonzero(multi)
    pts.extend(zip((ii + 1) * grid.h, (jj + 1) * grid.h))
    for axis in (0, 1):
        a = label[:-1, :] if axis == 0 else label[:, :-1]
        b = label[1:, :] if axis == 0 else label[:, 1:]
        jj, ii = np.nonzero((a >= 0) & (b >= 0) & (a != b))
        if axis == 0:
            pts.extend(zip((ii + 1) * grid.h, (jj + 1.5) * grid.h))
        else:
            pts.extend(zip((ii + 1.5) * grid.h, (jj + 1) * grid.h))
    return np.array(pts, dtype=float).reshape(-1, 2)


def audit_cells(op: DirichletOperator, cell_masks, ks, costs, tol: float = 1e-8):
    """Eigenvalues of each cell and the partition objectives.

    Returns (cell EigenResults, sum_i psi_i(lambda_1..k_i), sum_i lambda_{k_i}).
    """
    eigs = []
    obj = 0.0
    main = 0.0
    for i, (mask, k, cost) in enumerate(zip(cell_masks, ks, costs)):
        try:
            res = lowest_eigenpairs(op, mask, k=k, tol=tol, seed=i)
        except (EigensolverError, EmptyCellError) as exc:
            raise type(exc)(f"cell {i + 1}: {exc}") from exc
        eigs.append(res)
        obj += psi_eval(cost, res.values)
        main += float(res.values[-1])
    return eigs, obj, main


def build_result(state: PartitionState, report=None, threshold_rel: float = 1e-3, smooth: bool = False) -> PartitionResult:
    cells, interface = extract_cells(state, threshold_rel, smooth)
    eigs, obj, main = audit_cells(state.op, cells, state.ks, state.costs)
    res = PartitionResult(
        grid=state.grid,
        cell_masks=cells,
        interface_mask=interface,
        cell_eigs=eigs,
        objective_relaxed=energy_beta(state),
        objective_partition=obj,
        objective_main=main,
        lam_k=[float(e.values[-1]) for e in eigs],
        penalty=penalty_term(state),
    )
    if report is not None:
        res.weights = report.weights
        res.multipliers = report.multipliers.mu
        res.selection = report.selection
    return res


def compare_levels(result: PartitionResult) -> dict:
    """Gap between the partition objective and the relaxed (penalised) level.

    ``consistency_alarm``: the relaxed level exceeds the partition objective
    by more than 2%. ``gap_alarm``: the partition objective exceeds the
    relaxed level by more than 5% (supports still overlapping).
    """
    part = result.objective_partition
    relaxed = result.objective_relaxed
    gap = part - relaxed
    consistency = relaxed - part > CONSISTENCY_SLACK * abs(part)
    wide = gap > GAP_LIMIT * abs(part)
    return {
        "gap": gap,
        "gap_rel": gap / abs(part) if part else float("inf"),
        "penalty": result.penalty,
        "objective_main": result.objective_main,
        "consistency_alarm": bool(consistency),
        "gap_alarm": bool(wide),
        "flagged": bool(consistency or wide),
    }
