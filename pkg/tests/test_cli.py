import math

import numpy as np
import pytest

from specpart import runner
from specpart.cli import main
from specpart.errors import GroupExtinctionError
from specpart.fieldio import read_fields
from specpart.grid import read_spmask

BENCH = """\
domain.shape = rectangle
domain.width = 2
domain.height = 1
domain.h = 1/32
groups.m = 2
groups.k = 1 1
solver.beta_min = 1
solver.beta_max = 16384
"""

SMALL = """\
domain.shape = rectangle
domain.width = 2
domain.height = 1
domain.h = 1/16
groups.m = 2
solver.beta_max = 256
diagnostics.r_min = 2
diagnostics.r_max = 4
diagnostics.boundary_margin = 2
"""


def summary(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.slow
def test_run_two_cells(tmp_path):
    cfg = write(tmp_path, BENCH)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--seed", "7"]) == 0
    s = summary(out / "summary.txt")
    assert s["status"] == "ok"
    assert abs(float(s["objective_partition"]) - 4 * math.pi**2) <= 0.03 * 4 * math.pi**2
    assert s["penalty_nonincreasing_last5"] == "true"
    for name in ("fields.spf", "diag.txt", "cells_1.spmask", "cells_2.spmask", "plotdata_stages.csv",
                 "plotdata_almgren.csv", "plotdata_interface.csv"):
        assert (out / name).is_file(), name
    c1 = read_spmask(out / "cells_1.spmask")
    c2 = read_spmask(out / "cells_2.spmask")
    assert c1.h == 1 / 32 and not np.any(c1.mask & c2.mask)
    assert read_fields(out / "fields.spf").ks == [1, 1]

    # audit of the saved fields reproduces the partition objective
    out2 = tmp_path / "audit"
    assert main(["audit", str(out / "fields.spf"), cfg, "--out", str(out2)]) == 0
    a = summary(out2 / "summary.txt")
    assert a["objective_partition"] == s["objective_partition"]


def test_reproducible(tmp_path):
    cfg = write(tmp_path, SMALL)
    codes = [main(["run", cfg, "--out", str(tmp_path / d), "--seed", "3"]) for d in ("a", "b")]
    assert codes == [0, 0]
    a = (tmp_path / "a" / "summary.txt").read_bytes()
    assert a == (tmp_path / "b" / "summary.txt").read_bytes()
    assert (tmp_path / "a" / "fields.spf").read_bytes() == (tmp_path / "b" / "fields.spf").read_bytes()


def test_restarts_pick_lowest(tmp_path):
    cfg = write(tmp_path, SMALL + "solver.n_restarts = 3\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    s = summary(tmp_path / "o" / "summary.txt")
    energies = [float(e) for e in s["restart_energies"].split()]
    assert s["restart_seeds"] == "1 2 3"
    assert float(s["energy_final"]) == min(energies)


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, "domain.h = 1/16\nsolver.q = 0.5\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "run.cfg:2:" in err and "q must exceed 1" in err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write(tmp_path, SMALL)
    assert main(["run", cfg, "--out", str(blocker / "sub")]) == 4


def test_missing_fields_file(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert main(["audit", str(tmp_path / "none.spf"), cfg, "--out", str(tmp_path / "o")]) == 4


def test_solver_failure_writes_partial(tmp_path, monkeypatch):
    cfg = write(tmp_path, SMALL)
    real = runner.solve

    def failing(grid, ks, *args, **kw):
        state, _ = real(grid, ks, *args, **kw)
        err = GroupExtinctionError("group extinction: group(s) [2] vanished at beta=256")
        err.state = state
        raise err

    monkeypatch.setattr(runner, "solve", failing)
    out = tmp_path / "o"
    assert main(["run", cfg, "--out", str(out)]) == 3
    s = summary(out / "summary.txt")
    assert s["status"] == "solver_failed"
    assert s["partial"] == "true"
    assert "extinction" in s["error"]
    assert read_fields(out / "fields.spf").ks == [1, 1]


def test_eig(tmp_path, capsys):
    cfg = write(tmp_path, "domain.shape = rectangle\ndomain.width = 1\ndomain.h = 1/16\neig.k = 3\n")
    assert main(["eig", cfg]) == 0
    s = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert max(float(v) for v in s["relative_error"].split()) < 1e-8
