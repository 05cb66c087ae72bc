"""Run orchestration: restarts, partition audit, diagnostics and artifact files."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .eigensolve import lowest_eigenpairs
from .energy import PartitionState, group_density, multipliers
from .errors import ConfigError, DegenerateSampleError, OutputError, SolverError
from .fieldio import write_fields, write_table
from .grid import assemble_laplacian, build_grid, discrete_rectangle_eigenvalues, write_spmask
from .optimizer import ContinuationSchedule, SolveReport, solve
from .partition import PartitionResult, build_result, compare_levels, interface_points
from .specfun import SpectralCost

log = logging.getLogger(__name__)

SINGULAR_N = 1.2


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, str):
        return v
    if v is None:
        return "none"
    return " ".join(_fmt(x) for x in v)


def format_lines(pairs) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs)


def schedule_from(cfg: RunConfig) -> ContinuationSchedule:
    return ContinuationSchedule(
        beta_ladder=cfg.beta_ladder,
        p_ladder=cfg["groups.p_ladder"],
        max_iter=cfg["solver.max_iter"],
        gtol=cfg["solver.gtol"],
        armijo_c=cfg["solver.armijo_c"],
        shrink=cfg["solver.shrink"],
        max_backtracks=cfg["solver.max_backtracks"],
        warm_start=cfg["solver.warm_start"],
    )


def cost_from(cfg: RunConfig) -> SpectralCost:
    kind = cfg["groups.cost"]
    return SpectralCost(kind, cfg["groups.p_ladder"][0] if kind == "power_sum" else 1.0)


def grid_from(cfg: RunConfig):
    return build_grid(cfg.shape_tag, cfg["domain.h"])


def _solve_one(args):
    cfg, seed = args
    grid = grid_from(cfg)
    op = assemble_laplacian(grid)
    try:
        state, report = solve(
            grid, cfg.ks, cost_from(cfg), schedule_from(cfg), seed=seed, q=cfg["solver.q"], op=op,
            weight_floor=cfg["solver.weight_floor"],
        )
    except SolverError as exc:
        return seed, None, None, exc
    return seed, state, report, None


def run_restarts(cfg: RunConfig, seed: int, restarts: int, jobs: int = 1):
    """Solve from ``restarts`` consecutive seeds; results in seed order."""
    tasks = [(cfg, seed + i) for i in range(restarts)]
    if jobs > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_one, tasks))
    return [_solve_one(t) for t in tasks]


# diagnostics ---------------------------------------------------------------


@dataclass
class DiagnosticReport:
    center: np.ndarray | None = None
    radii: np.ndarray = field(default_factory=lambda: np.empty(0))
    almgren: dg.AlmgrenSample | None = None
    almgren_C: float = float("nan")
    almgren_max_drop: float = float("nan")
    dedr_radii: np.ndarray = field(default_factory=lambda: np.empty(0))
    dedr: np.ndarray = field(default_factory=lambda: np.empty(0))
    dedr_lhs: np.ndarray = field(default_factory=lambda: np.empty(0))
    dedr_rhs: np.ndarray = field(default_factory=lambda: np.empty(0))
    pohozaev: np.ndarray = field(default_factory=lambda: np.empty(0))
    probes: dg.ProbeSummary | None = None
    error: str | None = None

    @property
    def singular_candidate(self) -> bool:
        return self.almgren is not None and bool(np.any(self.almgren.N_vals[:1] > SINGULAR_N))


def _center(state, points, cfg):
    if cfg["diagnostics.center"] is not None:
        return np.asarray(cfg["diagnostics.center"], dtype=float)
    if state.m > 1 and len(points):
        return dg.interface_midpoint(points)
    # single group: the node of largest density
    dens = sum(group_density(U) for U in state.groups)
    return state.grid.dof_coords[int(np.argmax(dens))].astype(float)


def run_diagnostics(state: PartitionState, report: SolveReport | None, result: PartitionResult, cfg: RunConfig):
    """Almgren scan, dE/dr and Pohozaev residuals and probes; degenerate samples are recorded."""
    grid = state.grid
    h = grid.h
    mult = report.multipliers if report is not None else multipliers(state)
    sel = report.selection if report is not None else None
    wf = dg.WeightedFields.from_state(state, mult, sel)
    points = interface_points(grid, result.cell_masks, result.interface_mask)
    out = DiagnosticReport()
    x0 = _center(state, points, cfg)
    out.center = x0
    dist = wf.distance_to_boundary(x0)
    steps = np.arange(np.ceil(cfg["diagnostics.r_min"] - 1e-9), np.floor(cfg["diagnostics.r_max"] + 1e-9) + 1)
    radii = steps * h
    radii = radii[(radii <= dist + 1e-12) & (radii > h)]
    out.radii = radii
    try:
        if radii.size == 0:
            raise DegenerateSampleError(f"degenerate sample: no radius fits around {tuple(x0)} (distance {dist:.4g})")
        out.almgren = dg.almgren_scan(wf, x0, radii)
        out.almgren_C = dg.almgren_constant(wf)
        out.almgren_max_drop = dg.almgren_monotonicity(out.almgren, out.almgren_C)
        out.dedr_radii = radii
        out.dedr, out.dedr_lhs, out.dedr_rhs = dg.dEdr_identity_residual(wf, x0, radii)
        out.pohozaev = np.array([dg.pohozaev_residual(wf, x0, r) for r in radii])
    except DegenerateSampleError as exc:
        out.error = str(exc)
    if state.m > 1 and len(points):
        out.probes = dg.interface_gradient_match(
            wf,
            result.cell_masks,
            points,
            n_probes=cfg["diagnostics.n_probes"],
            d_probe=cfg["diagnostics.d_probe"] * h,
            boundary_margin=cfg["diagnostics.boundary_margin"] * h,
        )
    return out, points


def diag_text(d: DiagnosticReport) -> str:
    pairs = [("center", d.center), ("radii", d.radii)]
    if d.almgren is not None:
        pairs += [
            ("almgren_E", d.almgren.E_vals),
            ("almgren_H", d.almgren.H_vals),
            ("almgren_N", d.almgren.N_vals),
            ("almgren_C", d.almgren_C),
            ("almgren_max_drop", d.almgren_max_drop),
            ("singular_candidate", d.singular_candidate),
            ("dedr_residual", d.dedr),
            ("dedr_lhs", d.dedr_lhs),
            ("dedr_rhs", d.dedr_rhs),
            ("dedr_residual_max", float(d.dedr.max()) if d.dedr.size else float("nan")),
            ("pohozaev_residual", d.pohozaev),
            ("pohozaev_residual_max", float(d.pohozaev.max()) if d.pohozaev.size else float("nan")),
        ]
    if d.probes is not None:
        p = d.probes
        pairs += [
            ("probes", len(p.probes)),
            ("probes_singular", p.n_singular),
            ("probe_median_mismatch", p.median_mismatch),
            ("probe_max_mismatch", p.max_mismatch),
            ("probe_sides_positive", p.all_positive),
        ]
        for i, pr in enumerate(p.probes, start=1):
            pairs.append((f"probe_{i}", [*pr.point, *pr.normal, *pr.side_values, pr.mismatch]))
    pairs.append(("degenerate", d.error if d.error else False))
    return format_lines(pairs)


# summary -------------------------------------------------------------------


def summary_pairs(cfg: RunConfig, grid, state, report, result, restarts, status="ok", error=None):
    st = report.stages if report is not None else []
    pairs = [
        ("status", status),
        ("error", error),
        ("shape", cfg["domain.shape"]),
        ("h", grid.h),
        ("nx", grid.nx),
        ("ny", grid.ny),
        ("n_dof", grid.n_dof),
        ("m", len(cfg.ks)),
        ("k", cfg.ks),
        ("cost", cfg["groups.cost"]),
        ("p_ladder", cfg["groups.p_ladder"]),
        ("q", cfg["solver.q"]),
        ("beta_ladder", cfg.beta_ladder),
        ("restart_seeds", [r[0] for r in restarts]),
        ("restart_energies", [r[2].final.energy if r[2] is not None else float("nan") for r in restarts]),
        ("best_seed", report.seed if report is not None else None),
    ]
    if st:
        pens = [s.penalty for s in st]
        tail = pens[-5:]
        pairs += [
            ("n_stages", len(st)),
            ("final_beta", st[-1].beta),
            ("final_p", st[-1].p),
            ("energy_final", st[-1].energy),
            ("penalty_final", st[-1].penalty),
            ("overlap_final", st[-1].overlap),
            ("l2_residual", st[-1].l2_residual),
            ("h1_residual", st[-1].h1_residual),
            ("grad_norm_final", st[-1].grad_norm),
            ("iterations_total", sum(s.iterations for s in st)),
            ("stages_converged", sum(s.converged for s in st)),
            ("line_search_failures", sum(s.line_search_failed for s in st)),
            ("penalty_nonincreasing_last5", all(b <= a for a, b in zip(tail, tail[1:]))),
            ("stage_energies", [s.energy for s in st]),
            ("stage_penalties", pens),
            ("weights", [x for w in report.weights for x in w]),
            ("mu_diagonal", [x for mu in report.multipliers.mu for x in np.diag(mu)]),
            (
                "mu_offdiag_max",
                max((float(np.abs(mu - np.diag(np.diag(mu))).max()) for mu in report.multipliers.mu), default=0.0),
            ),
            ("selection", report.selection),
            ("discarded", [len(d) for d in report.discarded]),
            ("eigen_spread", report.eigen_spread),
        ]
    if result is not None:
        cmp = compare_levels(result)
        pairs += [
            ("objective_relaxed", result.objective_relaxed),
            ("objective_partition", result.objective_partition),
            ("objective_main", result.objective_main),
            ("lambda_k", result.lam_k),
            ("gap", cmp["gap"]),
            ("gap_rel", cmp["gap_rel"]),
            ("consistency_alarm", cmp["consistency_alarm"]),
            ("gap_alarm", cmp["gap_alarm"]),
            ("cell_sizes", [int(c.sum()) for c in result.cell_masks]),
            ("interface_nodes", int(result.interface_mask.sum())),
        ]
        for i, e in enumerate(result.cell_eigs, start=1):
            pairs.append((f"cell_{i}_eigs", e.values))
    return pairs


# artifacts -----------------------------------------------------------------


def prepare_outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror}") from exc
    if not os.access(out, os.W_OK | os.X_OK):
        raise OutputError(f"output directory {out} is not writable")
    return out


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def write_plotdata(out: Path, state, report, points, diag):
    grid = state.grid
    dens = [grid.to_lattice(group_density(U)) for U in state.groups]
    names = [f"density_{i + 1}" for i in range(len(dens))]
    j = grid.ny // 2
    write_table(out / "plotdata_slice_x.csv", {"x": grid.xs, **{n: d[j] for n, d in zip(names, dens)}},
                comment=f"densities along y = {grid.ys[j]!r}")
    i = grid.nx // 2
    write_table(out / "plotdata_slice_y.csv", {"y": grid.ys, **{n: d[:, i] for n, d in zip(names, dens)}},
                comment=f"densities along x = {grid.xs[i]!r}")
    pts = np.asarray(points).reshape(-1, 2)
    write_table(out / "plotdata_interface.csv", {"x": pts[:, 0], "y": pts[:, 1]}, comment="interface points")
    if report is not None:
        st = report.stages
        write_table(out / "plotdata_stages.csv", {
            "beta": [s.beta for s in st], "p": [s.p for s in st], "energy": [s.energy for s in st],
            "penalty": [s.penalty for s in st], "iterations": [s.iterations for s in st],
        }, comment="continuation stages")
    if diag is not None and diag.almgren is not None:
        a = diag.almgren
        write_table(out / "plotdata_almgren.csv", {"r": a.radii, "E": a.E_vals, "H": a.H_vals, "N": a.N_vals},
                    comment=f"centre {diag.center[0]!r} {diag.center[1]!r}")


def run(cfg: RunConfig, out_dir=None, seed=None, restarts=None, jobs: int = 1) -> int:
    """Full pipeline; returns the process exit code."""
    out = prepare_outdir(out_dir if out_dir is not None else cfg["output.directory"])
    seed = cfg["solver.seed"] if seed is None else seed
    restarts = cfg["solver.n_restarts"] if restarts is None else restarts
    grid = grid_from(cfg)
    if sum(cfg.ks) > grid.n_dof:
        raise ConfigError(f"groups.k sums to {sum(cfg.ks)} but the domain has only {grid.n_dof} nodes",
                          line=cfg.lines.get("groups.k"), path=cfg.path)
    results = run_restarts(cfg, seed, restarts, jobs)
    good = [r for r in results if r[1] is not None]
    if not good:
        exc = results[0][3]
        partial = getattr(exc, "state", None)
        pairs = summary_pairs(cfg, grid, None, None, None, results, status="solver_failed", error=str(exc))
        pairs.append(("partial", partial is not None))
        if partial is not None and cfg["output.fields"]:
            write_fields(out / "fields.spf", grid, partial.groups)
        _write(out / "summary.txt", format_lines(pairs))
        log.error("%s", exc)
        return exc.exit_code
    seed_best, state, report, _ = min(good, key=lambda r: (r[2].final.energy, r[0]))
    if cfg["output.fields"]:
        write_fields(out / "fields.spf", grid, state.groups)
    try:
        result = build_result(state, report, cfg["partition.threshold_rel"], cfg["partition.smooth"])
    except SolverError as exc:
        pairs = summary_pairs(cfg, grid, state, report, None, results, status="solver_failed", error=str(exc))
        pairs.append(("partial", True))
        _write(out / "summary.txt", format_lines(pairs))
        log.error("%s", exc)
        return exc.exit_code
    return _finish(cfg, out, state, report, result, results)


def _finish(cfg, out, state, report, result, restarts) -> int:
    grid = state.grid
    diag, points = None, interface_points(grid, result.cell_masks, result.interface_mask)
    if cfg["diagnostics.enabled"]:
        diag, points = run_diagnostics(state, report, result, cfg)
        _write(out / "diag.txt", diag_text(diag))
    if cfg["output.cells"]:
        for i, c in enumerate(result.cell_masks, start=1):
            write_spmask(out / f"cells_{i}.spmask", c, grid.h)
    if cfg["output.plotdata"]:
        write_plotdata(out, state, report, points, diag)
    status = "ok" if diag is None or diag.error is None else "diagnostics_degenerate"
    pairs = summary_pairs(cfg, grid, state, report, result, restarts, status=status,
                          error=diag.error if diag is not None else None)
    _write(out / "summary.txt", format_lines(pairs))
    if diag is not None and diag.error is not None:
        log.error("%s", diag.error)
        return DegenerateSampleError.exit_code
    return 0


def audit(cfg: RunConfig, dump, out_dir=None) -> int:
    """Partition audit and diagnostics for a saved state (final beta and p of the config)."""
    out = prepare_outdir(out_dir if out_dir is not None else cfg["output.directory"])
    grid = grid_from(cfg)
    try:
        groups = dump.dof_groups(grid)
    except ValueError as exc:
        raise OutputError(str(exc)) from exc
    if dump.ks != cfg.ks:
        raise ConfigError(f"fields hold k = {dump.ks} but groups.k = {cfg.ks}", line=cfg.lines.get("groups.k"),
                          path=cfg.path)
    op = assemble_laplacian(grid)
    cost = cost_from(cfg).with_p(cfg["groups.p_ladder"][-1])
    state = PartitionState(op, groups, [cost] * len(groups), beta=float(cfg.beta_ladder[-1]), q=cfg["solver.q"])
    result = build_result(state, None, cfg["partition.threshold_rel"], cfg["partition.smooth"])
    return _finish(cfg, out, state, None, result, [])


def eig_report(cfg: RunConfig) -> str:
    """Lowest eig.k eigenvalues of the configured domain, with closed forms for rectangles."""
    grid = grid_from(cfg)
    op = assemble_laplacian(grid)
    res = lowest_eigenpairs(op, k=cfg["eig.k"], tol=cfg["eig.tol"])
    pairs = [("shape", cfg["domain.shape"]), ("h", grid.h), ("n_dof", grid.n_dof),
             ("eigenvalues", res.values), ("residuals", res.residuals)]
    if cfg["domain.shape"] == "rectangle":
        exact = discrete_rectangle_eigenvalues(cfg["domain.width"], cfg["domain.height"], grid.h, cfg["eig.k"])
        pairs += [("closed_form", exact), ("relative_error", np.abs(res.values - exact) / exact)]
    return format_lines(pairs)

