"""Masked uniform grids and the 5-point Dirichlet Laplacian.

Lattice conventions: a grid has ``nx * ny`` interior nodes at
``x = (i + 1) h``, ``y = (j + 1) h`` for ``0 <= i < nx``, ``0 <= j < ny``.
Lattice arrays are indexed ``[j, i]`` (row ``j`` is a line of constant y).
Degrees of freedom are the true mask nodes, numbered in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, EmptyDomainError, OutputError

SHAPES = ("rectangle", "disk", "custom")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float
    mask: np.ndarray
    shape_tag: tuple = ("custom",)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.ny, self.nx):
            raise ValueError(f"mask shape {mask.shape} != (ny, nx) = {(self.ny, self.nx)}")
        if not self.h > 0:
            raise ValueError("grid spacing h must be positive")
        if not mask.any():
            raise EmptyDomainError("empty domain: no interior node lies inside the shape")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @cached_property
    def dof_index(self) -> np.ndarray:
        """Lattice array holding the dof number of each node, -1 outside."""
        idx = np.full(self.mask.shape, -1, dtype=np.int64)
        idx[self.mask] = np.arange(int(self.mask.sum()))
        idx.setflags(write=False)
        return idx

    @property
    def n_dof(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def xs(self) -> np.ndarray:
        return (np.arange(self.nx) + 1) * self.h

    @cached_property
    def ys(self) -> np.ndarray:
        return (np.arange(self.ny) + 1) * self.h

    @cached_property
    def dof_coords(self) -> np.ndarray:
        """(n_dof, 2) array of node coordinates."""
        jj, ii = np.nonzero(self.mask)
        return np.column_stack([(ii + 1) * self.h, (jj + 1) * self.h])

    @property
    def extent(self) -> tuple[float, float]:
        """Size of the bounding box, boundary nodes included."""
        return ((self.nx + 1) * self.h, (self.ny + 1) * self.h)

    def to_lattice(self, f: np.ndarray) -> np.ndarray:
        """Scatter dof vectors (last axis n_dof) onto the full lattice, zero outside."""
        f = np.asarray(f)
        out = np.zeros(f.shape[:-1] + self.mask.shape, dtype=f.dtype)
        out[..., self.mask] = f
        return out

    def from_lattice(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[..., self.mask]

    def restrict(self, submask: np.ndarray) -> "Grid":
        submask = np.asarray(submask, dtype=bool)
        if submask.shape != self.mask.shape:
            raise ValueError("submask shape does not match the grid lattice")
        if np.any(submask & ~self.mask):
            raise ValueError("submask is not contained in the grid mask")
        return Grid(self.nx, self.ny, self.h, submask, ("custom",))


def _lattice_size(length: float, h: float, name: str) -> int:
    if not length > 0:
        raise ConfigError(f"{name} must be positive, got {length}")
    n = int(round(length / h)) - 1
    if n < 1:
        raise EmptyDomainError(f"empty domain: {name}={length} holds no interior node at h={h}")
    return n


def build_grid(shape_tag, h: float) -> Grid:
    """Build a masked grid.

    ``shape_tag`` is ``("rectangle", w, hgt)``, ``("disk", radius)`` or
    ``("custom", path)``. The disk sits in the box ``[0, 2 radius]^2``
    centred at ``(radius, radius)``; a node belongs to it when its distance
    to the centre is strictly below the radius. For custom masks the spacing
    stored in the file wins over ``h``.
    """
    kind = shape_tag[0]
    if kind == "custom":
        return read_spmask(shape_tag[1])
    if not h > 0:
        raise ConfigError(f"h must be positive, got {h}")
    if kind == "rectangle":
        _, w, hgt = shape_tag
        nx = _lattice_size(w, h, "width")
        ny = _lattice_size(hgt, h, "height")
        mask = np.ones((ny, nx), dtype=bool)
        return Grid(nx, ny, h, mask, ("rectangle", float(w), float(hgt)))
    if kind == "disk":
        radius = shape_tag[1]
        n = _lattice_size(2 * radius, h, "2*radius")
        c = (np.arange(n) + 1) * h - radius
        d2 = c[None, :] ** 2 + c[:, None] ** 2
        mask = d2 < radius**2
        return Grid(n, n, h, mask, ("disk", float(radius)))
    raise ConfigError(f"unknown shape {kind!r}; expected one of {SHAPES}")


def laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    """Tridiagonal Dirichlet second-difference matrix (2, -1, -1) / h^2."""
    e = np.ones(n) / h**2
    return sp.diags([-e[1:], 2 * e, -e[1:]], [-1, 0, 1], format="csr")


@dataclass(frozen=True)
class DirichletOperator:
    """5-point Dirichlet Laplacian over the dofs of ``grid`` (scaled 1/h^2)."""

    grid: Grid
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def n_dof(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x

    def restricted(self, submask: np.ndarray) -> "DirichletOperator":
        return assemble_laplacian(self.grid.restrict(submask))


def assemble_laplacian(grid: Grid) -> DirichletOperator:
    """Kronecker sum of 1-D operators on the bounding rectangle, restricted to the mask.

    Dropping masked-out rows and columns imposes a zero value on every
    masked-out neighbour while keeping the diagonal at 4/h^2.
    """
    lx = laplacian_1d(grid.nx, grid.h)
    ly = laplacian_1d(grid.ny, grid.h)
    full = sp.kron(sp.identity(grid.ny), lx) + sp.kron(ly, sp.identity(grid.nx))
    keep = np.flatnonzero(grid.mask.ravel())
    mat = sp.csr_matrix(full.tocsr()[keep][:, keep])
    mat.sort_indices()
    return DirichletOperator(grid, mat)


def _check_sizes(f, g, grid):
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape[-1] != grid.n_dof or g.shape[-1] != grid.n_dof:
        raise ValueError(f"field sizes {f.shape[-1]}, {g.shape[-1]} do not match n_dof={grid.n_dof}")
    return f, g


def inner_l2(f, g, grid: Grid) -> float:
    """h^2 * sum(f * g) over the mask nodes."""
    f, g = _check_sizes(f, g, grid)
    return grid.h**2 * float(np.dot(f, g))


def inner_h1(f, g, op: DirichletOperator) -> float:
    """h^2 * (L f) . g, the discrete Dirichlet form."""
    f, g = _check_sizes(f, g, op.grid)
    return op.grid.h**2 * float(np.dot(op.matrix @ f, g))


def discrete_rectangle_eigenvalues(w: float, hgt: float, h: float, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvalues of the 5-point Laplacian on a w x hgt rectangle.

    Closed form (4/h^2) [sin^2(m pi h / 2w) + sin^2(n pi h / 2 hgt)].
    """
    nx = int(round(w / h)) - 1
    ny = int(round(hgt / h)) - 1
    m = np.arange(1, nx + 1)
    n = np.arange(1, ny + 1)
    sx = np.sin(m * np.pi * h / (2 * w)) ** 2
    sy = np.sin(n * np.pi * h / (2 * hgt)) ** 2
    vals = 4 / h**2 * (sx[None, :] + sy[:, None])
    return np.sort(vals.ravel())[:count]


def read_spmask(path) -> Grid:
    """Read an SPMASK file: ``SPMASK <nx> <ny> <h>`` then ny lines of nx '0'/'1'.

    The first mask line is row j = 0 (smallest y).
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OutputError(f"cannot read mask file {path}: {exc}") from exc
    if not lines:
        raise ConfigError("empty mask file", path=path, line=1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "SPMASK":
        raise ConfigError("header must read 'SPMASK <nx> <ny> <h>'", path=path, line=1)
    try:
        nx, ny, h = int(head[1]), int(head[2]), float(head[3])
    except ValueError as exc:
        raise ConfigError(f"bad header value: {exc}", path=path, line=1) from exc
    rows = lines[1 : 1 + ny]
    if len(rows) != ny:
        raise ConfigError(f"expected {ny} mask rows, found {len(rows)}", path=path, line=len(lines))
    mask = np.zeros((ny, nx), dtype=bool)
    for j, row in enumerate(rows):
        row = row.strip()
        if len(row) != nx or set(row) - {"0", "1"}:
            raise ConfigError(f"mask row must be {nx} characters of 0/1", path=path, line=j + 2)
        mask[j] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("1")
    return Grid(nx, ny, h, mask, ("custom", str(path)))


def write_spmask(path, mask: np.ndarray, h: float) -> None:
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    body = "\n".join("".join("1" if b else "0" for b in row) for row in mask)
    try:
        Path(path).write_text(f"SPMASK {nx} {ny} {h!r}\n{body}\n")
    except OSError as exc:
        raise OutputError(f"cannot write mask file {path}: {exc}") from exc
