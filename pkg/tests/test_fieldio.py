import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specpart.errors import OutputError
from specpart.fieldio import MAGIC, decode_fields, encode_fields, read_fields, write_fields, write_table
from specpart.grid import build_grid

GRID = build_grid(("disk", 0.5), 1 / 8)


def test_layout(rng):
    groups = [rng.standard_normal((1, GRID.n_dof)), rng.standard_normal((2, GRID.n_dof))]
    data = encode_fields(GRID, groups)
    assert data.startswith(MAGIC)
    head, body = data[len(MAGIC) :].split(b"\n", 1)
    assert head.decode().split() == ["2", "1", "2", str(GRID.nx), str(GRID.ny), repr(GRID.h)]
    raw = np.frombuffer(body, dtype="<f8")
    assert raw.size == 3 * GRID.nx * GRID.ny
    # first field, row-major over the full lattice, zeros off the mask
    first = raw[: GRID.nx * GRID.ny].reshape(GRID.ny, GRID.nx)
    np.testing.assert_array_equal(first, GRID.to_lattice(groups[0][0]))
    assert np.all(first[~GRID.mask] == 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.integers(0, 2**31))
def test_roundtrip_bit_exact(ks, seed):
    rng = np.random.default_rng(seed)
    groups = [rng.standard_normal((k, GRID.n_dof)) * 10.0 ** rng.integers(-300, 300) for k in ks]
    dump = decode_fields(encode_fields(GRID, groups))
    assert dump.ks == ks
    assert (dump.nx, dump.ny, dump.h) == (GRID.nx, GRID.ny, GRID.h)
    for a, b in zip(groups, dump.dof_groups(GRID)):
        assert a.tobytes() == b.tobytes()


def test_file_roundtrip(tmp_path, rng):
    groups = [rng.standard_normal((2, GRID.n_dof))]
    p = tmp_path / "fields.spf"
    write_fields(p, GRID, groups)
    np.testing.assert_array_equal(read_fields(p).dof_groups(GRID)[0], groups[0])


def test_lattice_mismatch(rng):
    dump = decode_fields(encode_fields(GRID, [rng.standard_normal((1, GRID.n_dof))]))
    with pytest.raises(ValueError, match="does not match"):
        dump.dof_groups(build_grid(("disk", 0.5), 1 / 16))


@pytest.mark.parametrize(
    "data", [b"SPF2\n1 1 2 2 0.5\n", b"SPF1\n1 1 2 2\n", b"SPF1\n1 1 2 2 0.5\n" + b"\0" * 8, b"SPF1\n1 1 2 2 0.5"]
)
def test_corrupt(tmp_path, data):
    with pytest.raises(ValueError):
        decode_fields(data)
    p = tmp_path / "bad.spf"
    p.write_bytes(data)
    with pytest.raises(OutputError):
        read_fields(p)


def test_io_errors(tmp_path):
    with pytest.raises(OutputError):
        read_fields(tmp_path / "missing.spf")
    with pytest.raises(OutputError):
        write_fields(tmp_path / "no" / "dir" / "f.spf", GRID, [np.zeros((1, GRID.n_dof))])


def test_table(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, {"x": [0.5, 1.0], "y": [1, 2]}, comment="demo")
    lines = p.read_text().splitlines()
    assert lines[:2] == ["# demo", "# x y"]
    np.testing.assert_array_equal(np.loadtxt(p), [[0.5, 1], [1, 2]])
