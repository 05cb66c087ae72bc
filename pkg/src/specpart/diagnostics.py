"""Almgren frequency, dE/dr and Pohozaev balances, and interface gradient matching.

All quantities are evaluated on lattice fields padded with two rings of
zeros (the Dirichlet boundary values). In padded index (J, I) a node sits
at x = (I - 1) h, y = (J - 1) h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import MultiplierSet, PartitionState
from .errors import DegenerateSampleError
from .grid import Grid

PAD = 2
H_FLOOR = 1e-14
SUBSAMPLE = 8


@dataclass
class WeightedFields:
    """Lattice fields with per-field gradient weights a and eigenvalue weights mu.

    ``fields[g]`` is a (k_g, ny, nx) array; ``a[g]`` and ``mu[g]`` are length k_g.
    """

    grid: Grid
    fields: list
    a: list
    mu: list

    def __post_init__(self):
        self.fields = [np.asarray(f, dtype=float).reshape((-1,) + self.grid.mask.shape) for f in self.fields]
        self.a = [np.broadcast_to(np.asarray(x, dtype=float), (f.shape[0],)).copy() for x, f in zip(self.a, self.fields)]
        self.mu = [np.broadcast_to(np.asarray(x, dtype=float), (f.shape[0],)).copy() for x, f in zip(self.mu, self.fields)]
        stack = np.concatenate(self.fields, axis=0)
        h = self.grid.h
        u = np.pad(stack, ((0, 0), (PAD, PAD), (PAD, PAD)))
        self._u = u
        self._gx = np.zeros_like(u)
        self._gy = np.zeros_like(u)
        self._gx[:, :, 1:-1] = (u[:, :, 2:] - u[:, :, :-2]) / (2 * h)
        self._gy[:, 1:-1, :] = (u[:, 2:, :] - u[:, :-2, :]) / (2 * h)
        # 5-point -Laplacian on the padded lattice (outer ring left at zero).
        Lu = np.zeros_like(u)
        Lu[:, 1:-1, 1:-1] = (
            4 * u[:, 1:-1, 1:-1] - u[:, 2:, 1:-1] - u[:, :-2, 1:-1] - u[:, 1:-1, 2:] - u[:, 1:-1, :-2]
        ) / h**2
        self._Lu = Lu
        self._a = np.concatenate(self.a)
        self._mu = np.concatenate(self.mu)
        self._group = np.concatenate([np.full(f.shape[0], g) for g, f in enumerate(self.fields)])
        inside = np.pad(self.grid.mask, PAD)
        self._dist = ndimage.distance_transform_edt(inside) * h

    @classmethod
    def from_state(cls, state: PartitionState, mult: MultiplierSet, selection=None) -> "WeightedFields":
        """Weights from the multiplier set; ``selection`` (1-based l_i) drops discarded fields."""
        fields, a, mu = [], [], []
        for i, U in enumerate(state.groups):
            lo = 0 if selection is None else selection[i] - 1
            fields.append(state.grid.to_lattice(U[lo:]))
            a.append(np.asarray(mult.weights[i])[lo:])
            mu.append(np.diag(mult.mu[i])[lo:])
        return cls(state.grid, fields, a, mu)

    # sampling helpers
    def _interp(self, arr, pts):
        h = self.grid.h
        coords = np.vstack([pts[:, 1] / h + PAD - 1, pts[:, 0] / h + PAD - 1])
        return np.array([ndimage.map_coordinates(a, coords, order=1, mode="constant") for a in arr])

    def circle(self, x0, r):
        n = 8 * int(np.ceil(r / self.grid.h - 1e-9))
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        nrm = np.column_stack([np.cos(th), np.sin(th)])
        pts = np.asarray(x0, dtype=float)[None, :] + r * nrm
        return pts, nrm, 2 * np.pi * r / n

    def ball_weights(self, x0, r):
        """Fraction of each padded node's h x h cell lying inside B_r(x0)."""
        h = self.grid.h
        P = self._u.shape[1:]
        X = (np.arange(P[1]) - PAD + 1) * h
        Y = (np.arange(P[0]) - PAD + 1) * h
        off = (np.arange(SUBSAMPLE) + 0.5) / SUBSAMPLE - 0.5
        w = np.zeros(P)
        jlo = max(int(np.floor((x0[1] - r) / h)) + PAD - 2, 0)
        jhi = min(int(np.ceil((x0[1] + r) / h)) + PAD + 1, P[0])
        ilo = max(int(np.floor((x0[0] - r) / h)) + PAD - 2, 0)
        ihi = min(int(np.ceil((x0[0] + r) / h)) + PAD + 1, P[1])
        xs = X[ilo:ihi, None] + h * off[None, :]
        ys = Y[jlo:jhi, None] + h * off[None, :]
        dx2 = (xs - x0[0]) ** 2
        dy2 = (ys - x0[1]) ** 2
        inside = dy2[:, None, :, None] + dx2[None, :, None, :] < r * r
        w[jlo:jhi, ilo:ihi] = inside.mean(axis=(2, 3))
        return w

    def check_ball(self, x0, r):
        d = self.distance_to_boundary(x0)
        if r > d + 1e-12:
            raise ValueError(f"ball of radius {r:.4g} around {tuple(x0)} leaves the domain (distance {d:.4g})")

    def distance_to_boundary(self, x0):
        pts = np.asarray(x0, dtype=float)[None, :]
        return float(self._interp(self._dist[None], pts)[0, 0])

    # integrals
    def volume_terms(self, x0, r):
        """(sum a int_B |grad u|^2, sum int_B mu u^2).

        The gradient term is summed by parts, int_B |grad u|^2 =
        int_{dB} u d_n u + int_B u (-Lap u), which stays second order both
        for smooth fields and for fields with a kink on their zero set.
        """
        w = self.ball_weights(x0, r) * self.grid.h**2
        inner = float(np.einsum("k,kji,ji->", self._a, self._u * self._Lu, w))
        pts, nrm, ds = self.circle(x0, r)
        u = self._interp(self._u, pts)
        dn = self._interp(self._gx, pts) * nrm[:, 0] + self._interp(self._gy, pts) * nrm[:, 1]
        flux = float(np.sum(self._a[:, None] * u * dn) * ds)
        mass = float(np.einsum("k,kji,ji->", self._mu, self._u**2, w))
        return inner + flux, mass

    def boundary_terms(self, x0, r):
        """Circle integrals of sum a u^2, a (d_n u)^2, a |grad u|^2 and mu u^2."""
        pts, nrm, ds = self.circle(x0, r)
        u = self._interp(self._u, pts)
        gx = self._interp(self._gx, pts)
        gy = self._interp(self._gy, pts)
        dn = gx * nrm[:, 0] + gy * nrm[:, 1]
        a = self._a[:, None]
        return {
            "a_u2": float(np.sum(a * u**2) * ds),
            "a_dn2": float(np.sum(a * dn**2) * ds),
            "a_grad2": float(np.sum(a * (gx**2 + gy**2)) * ds),
            "mu_u2": float(np.sum(self._mu[:, None] * u**2) * ds),
        }

    def group_gradient_sq(self, group, pts):
        """sum_n a_n |grad u_n|^2 of one group at arbitrary points."""
        sel = self._group == group
        gx = self._interp(self._gx[sel], pts)
        gy = self._interp(self._gy[sel], pts)
        return np.sum(self._a[sel][:, None] * (gx**2 + gy**2), axis=0)


@dataclass
class AlmgrenSample:
    x0: np.ndarray
    radii: np.ndarray
    E_vals: np.ndarray
    H_vals: np.ndarray
    N_vals: np.ndarray


def local_energy(wf: WeightedFields, x0, r) -> float:
    """E(x0, r) = int_B sum (a |grad u|^2 - mu u^2) (planar case, no r power)."""
    grad, mass = wf.volume_terms(x0, r)
    return grad - mass


def boundary_height(wf: WeightedFields, x0, r) -> float:
    """H(x0, r) = (1/r) int_{dB} sum a u^2."""
    return wf.boundary_terms(x0, r)["a_u2"] / r


def almgren_scan(wf: WeightedFields, x0, radii) -> AlmgrenSample:
    x0 = np.asarray(x0, dtype=float)
    radii = np.asarray(radii, dtype=float)
    E = np.empty(radii.size)
    H = np.empty(radii.size)
    for n, r in enumerate(radii):
        wf.check_ball(x0, r)
        E[n] = local_energy(wf, x0, r)
        H[n] = boundary_height(wf, x0, r)
        if H[n] < H_FLOOR:
            raise DegenerateSampleError(f"degenerate sample: H({tuple(x0)}, {r:.4g}) = {H[n]:.3e}")
    return AlmgrenSample(x0, radii, E, H, E / H)


def almgren_constant(wf: WeightedFields) -> float:
    """Monotonicity constant 2 max_n mu_n / a_n (planar case), i.e. twice the largest field energy."""
    ratios = [m / a for m, a in zip(wf._mu, wf._a) if a > 0]
    return 2.0 * float(max(ratios, default=0.0))


def almgren_monotonicity(sample: AlmgrenSample, C: float) -> float:
    """Largest relative drop of exp(C r^2) (N + 1) between consecutive radii (0 if nondecreasing)."""
    f = np.exp(C * sample.radii**2) * (sample.N_vals + 1.0)
    drops = (f[:-1] - f[1:]) / np.abs(f[:-1])
    return float(max(drops.max(initial=0.0), 0.0))


def dEdr_identity_residual(wf: WeightedFields, x0, radii, dr=None):
    """Relative mismatch of dE/dr against 2 int_{dB} a (d_n u)^2 - (2/r) int_B mu u^2.

    dE/dr is a centred difference over (r - dr, r + dr), dr = h by default.
    Only B_r must lie inside the domain; the outer ball sees the zero
    (Dirichlet) extension of the fields. Returns (residuals, lhs, rhs) arrays over ``radii``.
    """
    x0 = np.asarray(x0, dtype=float)
    dr = wf.grid.h if dr is None else dr
    res, lhs, rhs = [], [], []
    for r in np.atleast_1d(radii):
        wf.check_ball(x0, r)
        if boundary_height(wf, x0, r) < H_FLOOR:
            raise DegenerateSampleError(f"degenerate sample at r={r:.4g}")
        d = (local_energy(wf, x0, r + dr) - local_energy(wf, x0, r - dr)) / (2 * dr)
        bt = wf.boundary_terms(x0, r)
        _, mass = wf.volume_terms(x0, r)
        right = 2 * bt["a_dn2"] - 2 * mass / r
        lhs.append(d)
        rhs.append(right)
        res.append(abs(d - right) / (abs(d) + 1e-14))
    return np.array(res), np.array(lhs), np.array(rhs)


def pohozaev_terms(wf: WeightedFields, x0, r) -> dict:
    """The four planar Pohozaev terms; their sum vanishes for exact solutions."""
    x0 = np.asarray(x0, dtype=float)
    wf.check_ball(x0, r)
    bt = wf.boundary_terms(x0, r)
    if bt["a_u2"] / r < H_FLOOR:
        raise DegenerateSampleError(f"degenerate sample at r={r:.4g}")
    _, mass = wf.volume_terms(x0, r)
    return {
        "normal": 2 * r * bt["a_dn2"],
        "full": -r * bt["a_grad2"],
        "boundary_mass": r * bt["mu_u2"],
        "volume_mass": -2 * mass,
    }


def pohozaev_residual(wf: WeightedFields, x0, r) -> float:
    """|sum of terms| / (sum of |terms|); the (2 - N) volume term is zero in the plane."""
    t = pohozaev_terms(wf, x0, r)
    vals = np.array(list(t.values()))
    return float(abs(vals.sum()) / (np.abs(vals).sum() + 1e-14))


@dataclass
class InterfaceProbe:
    point: np.ndarray
    normal: np.ndarray
    cells: tuple
    side_values: tuple
    mismatch: float


@dataclass
class ProbeSummary:
    probes: list
    n_singular: int
    median_mismatch: float
    max_mismatch: float
    all_positive: bool
    singular_points: list = field(default_factory=list)


def _labels(grid, cell_masks):
    lab = np.full(grid.mask.shape, -1)
    for i, c in enumerate(cell_masks):
        lab[np.asarray(c, dtype=bool)] = i
    return np.pad(lab, PAD, constant_values=-1)


def _label_at(lab, h, pts):
    I = np.rint(pts[:, 0] / h).astype(int) + PAD - 1
    J = np.rint(pts[:, 1] / h).astype(int) + PAD - 1
    ok = (I >= 0) & (J >= 0) & (I < lab.shape[1]) & (J < lab.shape[0])
    out = np.full(len(pts), -1)
    out[ok] = lab[J[ok], I[ok]]
    return out


def cells_near(grid, lab, point, radius):
    h = grid.h
    I0 = int(round(point[0] / h)) + PAD - 1
    J0 = int(round(point[1] / h)) + PAD - 1
    w = int(np.ceil(radius / h))
    win = lab[max(J0 - w, 0) : J0 + w + 1, max(I0 - w, 0) : I0 + w + 1]
    return sorted(set(int(v) for v in np.unique(win) if v >= 0))


def interface_normal(points, p, h):
    """Unit normal from PCA of interface points in the 5 x 5 window around p."""
    near = points[np.all(np.abs(points - p) <= 2 * h + 1e-12, axis=1)]
    if len(near) < 2:
        return None
    C = np.cov((near - near.mean(axis=0)).T)
    w, V = np.linalg.eigh(C)
    return V[:, 0]


def interface_gradient_match(
    wf: WeightedFields,
    cell_masks,
    points,
    n_probes: int = 10,
    d_probe: float | None = None,
    boundary_margin: float | None = None,
    group_of_cell=None,
) -> ProbeSummary:
    """Compare sum_n a_n |grad u_n|^2 on the two sides of the interface.

    ``points`` are interface points (see partition.interface_points). Probes
    are spread along the interface, keep ``boundary_margin`` (8h) from the
    domain boundary and are skipped as singular when more than two cells lie
    within 3h.
    """
    grid = wf.grid
    h = grid.h
    d_probe = 3 * h if d_probe is None else d_probe
    margin = 8 * h if boundary_margin is None else boundary_margin
    group_of_cell = group_of_cell or list(range(len(cell_masks)))
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    lab = _labels(grid, cell_masks)
    dist = np.array([wf.distance_to_boundary(p) for p in points]) if len(points) else np.array([])
    cand = points[dist >= margin]
    singular_pts = []
    regular = []
    for p in cand:
        if len(cells_near(grid, lab, p, 3 * h)) > 2:
            singular_pts.append(p)
        else:
            regular.append(p)
    regular = np.array(regular).reshape(-1, 2)
    probes = []
    if len(regular):
        axis = np.linalg.eigh(np.cov(regular.T))[1][:, -1] if len(regular) > 1 else np.array([1.0, 0.0])
        order = np.argsort(regular @ axis, kind="stable")
        idx = np.unique(np.linspace(0, len(order) - 1, min(n_probes, len(order))).round().astype(int))
        for p in regular[order[idx]]:
            nrm = interface_normal(points, p, h)
            if nrm is None:
                continue
            sides = np.array([p + d_probe * nrm, p - d_probe * nrm])
            cl = _label_at(lab, h, sides)
            if cl[0] < 0 or cl[1] < 0 or cl[0] == cl[1]:
                continue
            vals = tuple(float(wf.group_gradient_sq(group_of_cell[c], s[None, :])[0]) for c, s in zip(cl, sides))
            mis = abs(vals[0] - vals[1]) / max(max(vals), 1e-300)
            probes.append(InterfaceProbe(p, nrm, (int(cl[0]), int(cl[1])), vals, mis))
    mism = np.array([pr.mismatch for pr in probes])
    return ProbeSummary(
        probes=probes,
        n_singular=len(singular_pts),
        median_mismatch=float(np.median(mism)) if mism.size else float("nan"),
        max_mismatch=float(mism.max()) if mism.size else float("nan"),
        all_positive=bool(probes) and all(min(pr.side_values) > 0 for pr in probes),
        singular_points=singular_pts,
    )


def interface_midpoint(points) -> np.ndarray:
    """Interface point closest to the centroid of all interface points."""
    points = np.asarray(points, dtype=float)
    c = points.mean(axis=0)
    return points[np.argmin(((points - c) ** 2).sum(axis=1))]
