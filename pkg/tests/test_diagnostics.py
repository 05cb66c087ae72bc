import numpy as np
import pytest

from specpart.diagnostics import (
    WeightedFields,
    almgren_constant,
    almgren_monotonicity,
    almgren_scan,
    boundary_height,
    dEdr_identity_residual,
    interface_gradient_match,
    interface_midpoint,
    local_energy,
    pohozaev_residual,
    pohozaev_terms,
)
from specpart.eigensolve import lowest_eigenpairs
from specpart.errors import DegenerateSampleError
from specpart.grid import assemble_laplacian, build_grid
from specpart.optimizer import ContinuationSchedule, default_beta_ladder, solve
from specpart.partition import build_result, interface_points
from specpart.specfun import SpectralCost

H = 1 / 64
X0 = np.array([0.5, 0.5])
RADII = np.arange(6, 21) * H


@pytest.fixture(scope="module")
def square():
    g = build_grid(("rectangle", 1, 1), H)
    X, Y = np.meshgrid(g.xs, g.ys)
    return g, X - 0.5, Y - 0.5


def homogeneous_fields(square, degree):
    g, dx, dy = square
    r = np.hypot(dx, dy)
    th = np.arctan2(dy, dx)
    if degree == 1:
        fs = [np.maximum(dx, 0), np.maximum(-dx, 0)]
    elif degree == 1.5:
        # r^(3/2) cos(3 theta / 2): three 120 degree sectors meeting at x0
        fs = [r**1.5 * np.cos(1.5 * th)]
    else:
        fs = [dx**2 - dy**2]
    return WeightedFields(g, [f[None] for f in fs], [1.0] * len(fs), [0.0] * len(fs))


@pytest.mark.parametrize("degree", [1, 1.5, 2])
def test_frequency_of_homogeneous_fields(square, degree):
    s = almgren_scan(homogeneous_fields(square, degree), X0, RADII)
    np.testing.assert_allclose(s.N_vals, degree, rtol=0.03)
    assert np.all(s.H_vals > 0)


def test_quadratic_closed_forms(square):
    wf = homogeneous_fields(square, 2)
    for r in (10 * H, 20 * H):
        # u = r^2 cos 2t: int_B |grad u|^2 = 2 pi r^4, (1/r) int_dB u^2 = pi r^4
        assert local_energy(wf, X0, r) == pytest.approx(2 * np.pi * r**4, rel=0.03)
        assert boundary_height(wf, X0, r) == pytest.approx(np.pi * r**4, rel=0.01)


def test_dEdr_linear_two_sided(square):
    g, dx, dy = square
    a, b, alpha = 1.0, 4.0, 2.0
    beta = alpha * np.sqrt(a / b)
    wf = WeightedFields(g, [np.where(dx > 0, alpha * dx, 0)[None], np.where(dx < 0, -beta * dx, 0)[None]],
                        [[a], [b]], [[0.0], [0.0]])
    res, lhs, rhs = dEdr_identity_residual(wf, X0, RADII)
    assert res.max() <= 0.05
    # E(r) = pi r^2 a alpha^2 when the slopes are matched
    np.testing.assert_allclose(lhs, 2 * np.pi * a * alpha**2 * RADII, rtol=0.05)


def test_pohozaev_terms_cancel_for_harmonic_fields(square):
    for degree in (1, 2):
        wf = homogeneous_fields(square, degree)
        t = pohozaev_terms(wf, X0, 12 * H)
        assert t["boundary_mass"] == 0 and t["volume_mass"] == 0
        assert pohozaev_residual(wf, X0, 12 * H) <= 0.02


@pytest.fixture(scope="module")
def disk_eigenfunction():
    g = build_grid(("disk", 0.5), H)
    op = assemble_laplacian(g)
    r = lowest_eigenpairs(op, k=1)
    return WeightedFields(g, [g.to_lattice(r.vectors)], [1.0], [r.values[0]])


def test_pohozaev_disk_eigenfunction(disk_eigenfunction):
    assert pohozaev_residual(disk_eigenfunction, X0, 0.3) <= 0.05


def test_rellich_balance_single_group(disk_eigenfunction):
    res, _, _ = dEdr_identity_residual(disk_eigenfunction, X0, RADII)
    assert res.max() <= 0.10
    res, _, _ = dEdr_identity_residual(disk_eigenfunction, np.array([0.4, 0.55]), np.arange(6, 16) * H)
    assert res.max() <= 0.10


def test_degenerate_and_out_of_domain(square):
    g, dx, dy = square
    zero = WeightedFields(g, [np.zeros_like(dx)[None]], [1.0], [0.0])
    with pytest.raises(DegenerateSampleError, match="degenerate"):
        almgren_scan(zero, X0, RADII)
    with pytest.raises(DegenerateSampleError):
        pohozaev_residual(zero, X0, 0.2)
    with pytest.raises(ValueError):
        almgren_scan(homogeneous_fields(square, 1), X0, [0.6])


def test_matched_slopes_probe(square):
    g, dx, dy = square
    a, b, alpha = 1.0, 4.0, 2.0
    beta = alpha * np.sqrt(a / b)
    wf = WeightedFields(g, [np.where(dx > 0, alpha * dx, 0)[None], np.where(dx < 0, -beta * dx, 0)[None]],
                        [[a], [b]], [[0.0], [0.0]])
    cells = [g.mask & (dx > 0), g.mask & (dx < 0)]
    pts = interface_points(g, cells, g.mask & ~cells[0] & ~cells[1])
    ps = interface_gradient_match(wf, cells, pts, n_probes=10)
    assert len(ps.probes) == 10
    assert ps.median_mismatch <= 0.02 and ps.all_positive
    for p in ps.probes:
        assert abs(abs(p.normal[0]) - 1) < 1e-12
        assert p.point[0] == pytest.approx(0.5)
    # unmatched slopes are detected
    wf2 = WeightedFields(g, wf.fields, [[a], [a]], [[0.0], [0.0]])
    assert interface_gradient_match(wf2, cells, pts).median_mismatch > 0.5


def test_interface_midpoint():
    pts = np.array([[0.0, 0.0], [1.0, 0.1], [2.0, 0.0]])
    np.testing.assert_array_equal(interface_midpoint(pts), [1.0, 0.1])


def test_monotonicity_helper():
    from specpart.diagnostics import AlmgrenSample

    r = np.array([0.1, 0.2, 0.3])
    s = AlmgrenSample(np.zeros(2), r, r, r, np.array([1.0, 0.9, 1.0]))
    assert almgren_monotonicity(s, 0.0) == pytest.approx(0.05)
    assert almgren_monotonicity(s, 100.0) == 0.0


def test_benchmark_frequency_monotone(two_cell_best):
    state, report, res = two_cell_best
    wf = WeightedFields.from_state(state, report.multipliers, report.selection)
    pts = interface_points(state.grid, res.cell_masks, res.interface_mask)
    x0 = interface_midpoint(pts)
    h = state.grid.h
    s = almgren_scan(wf, x0, np.arange(4, 17) * h)
    assert np.all(s.H_vals > 0)
    assert almgren_monotonicity(s, almgren_constant(wf)) <= 0.05


def test_triple_junction_probe_is_singular():
    g = build_grid(("disk", 0.5), 1 / 32)
    op = assemble_laplacian(g)
    sched = ContinuationSchedule(beta_ladder=default_beta_ladder(g.h))
    st, rep = solve(g, [1, 1, 1], SpectralCost("plain_sum"), sched, seed=0, op=op)
    res = build_result(st, rep)
    pts = interface_points(g, res.cell_masks, res.interface_mask)
    wf = WeightedFields.from_state(st, rep.multipliers)
    ps = interface_gradient_match(wf, res.cell_masks, pts, boundary_margin=4 * g.h)
    assert ps.n_singular >= 1
    d = min(np.hypot(*(p - 0.5)) for p in ps.singular_points)
    assert d <= 4 * g.h
    assert all(len(set(p.cells)) == 2 for p in ps.probes)


def test_exact_segregated_state():
    """Half-rectangle eigenfunctions glued at x=1: the beta -> infinity reference."""
    g = build_grid(("rectangle", 2, 1), 1 / 32)
    op = assemble_laplacian(g)
    X = g.dof_coords[:, 0]
    fields, lams = [], []
    for side in (X < 1 - 1e-12, X > 1 + 1e-12):
        cell = g.mask.copy()
        cell[g.mask] = side
        r = lowest_eigenpairs(op, cell, k=1)
        fields.append(r.grid.to_lattice(r.vectors))
        lams.append([r.values[0]])
    wf = WeightedFields(g, fields, [[1.0], [1.0]], lams)
    x0, h = np.array([1.0, 0.5]), g.h
    radii = np.arange(6, 17) * h
    assert dEdr_identity_residual(wf, x0, radii)[0].max() <= 0.06
    assert max(pohozaev_residual(wf, x0, r) for r in radii) <= 0.02
    N = almgren_scan(wf, x0, np.arange(4, 17) * h).N_vals
    # N(x0, 0+) = 1 at a regular point; the -mu u^2 term pulls N down like lambda r^2
    assert 0.9 <= N[0] <= 1.0
    assert np.all(np.diff(N) < 0)
