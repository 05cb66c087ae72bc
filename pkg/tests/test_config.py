import numpy as np
import pytest

from specpart.config import SCHEMA, parse_config, parse_text
from specpart.errors import ConfigError

MINIMAL = "domain.shape = rectangle\n"


def test_minimal_defaults():
    cfg = parse_text(MINIMAL)
    assert cfg.shape_tag == ("rectangle", 2.0, 1.0)
    assert cfg["domain.h"] == 1 / 32
    assert cfg["groups.m"] == 2 and cfg.ks == [1, 1]
    assert cfg["groups.cost"] == "plain_sum"
    assert cfg["solver.q"] == 2.0
    lad = cfg.beta_ladder
    assert lad[0] == 1 and lad[-1] == 16 * 32**2
    np.testing.assert_allclose(lad[1:] / lad[:-1], 2)
    assert cfg["output.directory"] == "specpart_out"
    assert set(cfg.values) == set(SCHEMA)


def test_full_config(tmp_path):
    text = """
    # comment line
    domain.shape = disk
    domain.radius = 0.5     # trailing comment
    domain.h = 1/64
    groups.m = 3
    groups.k = 1, 2, 1
    groups.cost = power_sum
    groups.p_ladder = 1 2 4
    solver.q = 1.5
    solver.beta_ladder = 1 10 100
    solver.warm_start = false
    diagnostics.center = 0.5 0.5
    """
    p = tmp_path / "c.cfg"
    p.write_text(text)
    cfg = parse_config(p)
    assert cfg.shape_tag == ("disk", 0.5)
    assert cfg["domain.h"] == 1 / 64
    assert cfg.ks == [1, 2, 1]
    assert cfg["groups.p_ladder"] == [1.0, 2.0, 4.0]
    np.testing.assert_array_equal(cfg.beta_ladder, [1, 10, 100])
    assert cfg["solver.warm_start"] is False
    assert cfg["diagnostics.center"] == (0.5, 0.5)
    assert cfg.path == str(p)


def test_q_must_exceed_one():
    with pytest.raises(ConfigError, match="q must exceed 1") as exc:
        parse_text("domain.h = 0.1\nsolver.q = 0.5\n", path="x.cfg")
    assert exc.value.line == 2
    assert str(exc.value).startswith("x.cfg:2:")


def test_k_length_names_both_keys():
    with pytest.raises(ConfigError) as exc:
        parse_text("groups.m = 3\ngroups.k = 1 1\n")
    msg = str(exc.value)
    assert "groups.k" in msg and "groups.m" in msg
    assert exc.value.line == 2


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("domain.shape = rectangle\nsolver.colour = red\n", 2, "unknown key"),
        ("domain.h 0.1\n", 1, "syntax error"),
        ("domain.h = abc\n", 1, "domain.h"),
        ("groups.m = 2.5\n", 1, "groups.m"),
        ("domain.h = 0.1\ndomain.h = 0.2\n", 2, "duplicate"),
        ("domain.shape = hexagon\n", 1, "domain.shape"),
        ("solver.warm_start = maybe\n", 1, "boolean"),
        ("domain.h = -1\n", 1, "positive"),
        ("groups.p_ladder = 2 1\n", 1, "increasing"),
        ("solver.beta_ladder = 1 1\n", 1, "increasing"),
        ("domain.shape = custom\n", 1, "mask_file"),
        ("groups.k =\n", 1, "missing value"),
        ("diagnostics.r_min = 10\ndiagnostics.r_max = 5\n", 2, "r_min"),
    ],
)
def test_errors_carry_line(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as exc:
        parse_text(text)
    assert exc.value.line == line
    assert exc.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.cfg")


def test_relative_mask_path(tmp_path):
    (tmp_path / "m.spmask").write_text("SPMASK 2 2 0.25\n11\n11\n")
    p = tmp_path / "c.cfg"
    p.write_text("domain.shape = custom\ndomain.mask_file = m.spmask\n")
    cfg = parse_config(p)
    assert cfg.shape_tag == ("custom", str(tmp_path / "m.spmask"))
