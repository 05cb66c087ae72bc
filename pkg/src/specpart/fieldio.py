"""Binary field dumps (``fields.spf``) and whitespace-separated plot tables.

Layout of an SPF file: the magic ``SPF1\\n``, an ASCII header line
``m k1 .. km nx ny h\\n``, then for each group and each field of that
group ny * nx little-endian float64 values in row-major lattice order
(row j = 0 first). Nodes outside the mask are stored as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutputError
from .grid import Grid

MAGIC = b"SPF1\n"
_LE = np.dtype("<f8")


@dataclass
class FieldDump:
    nx: int
    ny: int
    h: float
    fields: list  # per group, (k_i, ny, nx) float64

    @property
    def ks(self) -> list:
        return [f.shape[0] for f in self.fields]

    def dof_groups(self, grid: Grid) -> list:
        """Fields restricted to the dofs of ``grid`` (which must match the lattice)."""
        if (grid.nx, grid.ny) != (self.nx, self.ny) or not np.isclose(grid.h, self.h, rtol=1e-12, atol=0):
            raise ValueError(
                f"field lattice {self.nx}x{self.ny}, h={self.h!r} does not match "
                f"grid {grid.nx}x{grid.ny}, h={grid.h!r}"
            )
        return [grid.from_lattice(F) for F in self.fields]


def encode_fields(grid: Grid, groups) -> bytes:
    ks = [np.atleast_2d(U).shape[0] for U in groups]
    head = " ".join(str(v) for v in [len(ks), *ks, grid.nx, grid.ny]) + f" {grid.h!r}\n"
    parts = [MAGIC, head.encode("ascii")]
    for U in groups:
        lat = grid.to_lattice(np.atleast_2d(U))
        parts.append(np.ascontiguousarray(lat, dtype=_LE).tobytes())
    return b"".join(parts)


def decode_fields(data: bytes) -> FieldDump:
    if not data.startswith(MAGIC):
        raise ValueError("not an SPF1 file (bad magic)")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise ValueError("truncated SPF header")
    try:
        tok = data[len(MAGIC) : end].decode("ascii").split()
        m = int(tok[0])
        ks = [int(t) for t in tok[1 : 1 + m]]
        nx, ny = int(tok[1 + m]), int(tok[2 + m])
        h = float(tok[3 + m])
    except (IndexError, ValueError, UnicodeDecodeError):
        raise ValueError("malformed SPF header") from None
    if len(tok) != m + 4 or m < 1 or min(ks) < 1 or nx < 1 or ny < 1 or not h > 0:
        raise ValueError("malformed SPF header")
    body = data[end + 1 :]
    need = sum(ks) * nx * ny * 8
    if len(body) != need:
        raise ValueError(f"SPF payload holds {len(body)} bytes, header implies {need}")
    flat = np.frombuffer(body, dtype=_LE).astype(np.float64)
    fields, off = [], 0
    for k in ks:
        n = k * nx * ny
        fields.append(flat[off : off + n].reshape(k, ny, nx).copy())
        off += n
    return FieldDump(nx, ny, h, fields)


def write_fields(path, grid: Grid, groups) -> None:
    try:
        Path(path).write_bytes(encode_fields(grid, groups))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def read_fields(path) -> FieldDump:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return decode_fields(data)
    except ValueError as exc:
        raise OutputError(f"{path}: {exc}") from exc


def write_table(path, columns: dict, comment: str | None = None) -> None:
    """Whitespace-separated columns with a ``#`` header line."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else np.empty((0, 0))
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("# " + " ".join(names))
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in data)
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc
