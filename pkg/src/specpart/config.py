"""Line-oriented ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Lists are whitespace or comma
separated. Numbers may be written as fractions (``domain.h = 1/32``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError

COSTS = ("plain_sum", "power_sum", "product")
SHAPES = ("rectangle", "disk", "custom")


def _float(s: str) -> float:
    s = s.strip()
    try:
        return float(s)
    except ValueError:
        return float(Fraction(s))


def _int(s: str) -> int:
    v = _float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _list(conv):
    def parse(s: str):
        items = s.replace(",", " ").split()
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]

    return parse


def _str(s: str) -> str:
    return s.strip()


def _choice(options):
    def parse(s: str) -> str:
        t = s.strip().lower()
        if t not in options:
            raise ValueError(f"{s.strip()!r} is not one of {', '.join(options)}")
        return t

    return parse


def _point(s: str):
    t = s.strip().lower()
    if t == "auto":
        return None
    v = _list(_float)(s)
    if len(v) != 2:
        raise ValueError("expected 'auto' or two coordinates")
    return (v[0], v[1])


# key -> (parser, default). ``None`` defaults are filled during validation.
SCHEMA = {
    "domain.shape": (_choice(SHAPES), "rectangle"),
    "domain.width": (_float, 2.0),
    "domain.height": (_float, 1.0),
    "domain.radius": (_float, 0.5),
    "domain.mask_file": (_str, None),
    "domain.h": (_float, 1 / 32),
    "groups.m": (_int, 2),
    "groups.k": (_list(_int), None),
    "groups.cost": (_choice(COSTS), "plain_sum"),
    "groups.p_ladder": (_list(_float), [1.0, 2.0, 4.0, 8.0]),
    "solver.q": (_float, 2.0),
    "solver.beta_ladder": (_list(_float), None),
    "solver.beta_min": (_float, 1.0),
    "solver.beta_max": (_float, None),
    "solver.beta_ratio": (_float, 2.0),
    "solver.max_iter": (_int, 4000),
    "solver.gtol": (_float, 1e-6),
    "solver.armijo_c": (_float, 1e-4),
    "solver.shrink": (_float, 0.5),
    "solver.max_backtracks": (_int, 60),
    "solver.warm_start": (_bool, True),
    "solver.seed": (_int, 0),
    "solver.n_restarts": (_int, 1),
    "solver.weight_floor": (_float, 1e-3),
    "partition.threshold_rel": (_float, 1e-3),
    "partition.smooth": (_bool, False),
    "diagnostics.enabled": (_bool, True),
    "diagnostics.center": (_point, None),
    "diagnostics.r_min": (_float, 4.0),
    "diagnostics.r_max": (_float, 16.0),
    "diagnostics.n_probes": (_int, 10),
    "diagnostics.d_probe": (_float, 3.0),
    "diagnostics.boundary_margin": (_float, 8.0),
    "eig.k": (_int, 3),
    "eig.tol": (_float, 1e-8),
    "output.directory": (_str, "specpart_out"),
    "output.fields": (_bool, True),
    "output.cells": (_bool, True),
    "output.plotdata": (_bool, True),
}


@dataclass
class RunConfig:
    """Parsed configuration. Radii, probe distance and margin are in units of h."""

    values: dict
    path: str | None = None
    lines: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def shape_tag(self):
        shape = self["domain.shape"]
        if shape == "rectangle":
            return ("rectangle", self["domain.width"], self["domain.height"])
        if shape == "disk":
            return ("disk", self["domain.radius"])
        return ("custom", self["domain.mask_file"])

    @property
    def ks(self) -> list:
        return list(self["groups.k"])

    @property
    def beta_ladder(self) -> np.ndarray:
        return np.asarray(self["solver.beta_ladder"], dtype=float)

    def with_values(self, **changes) -> "RunConfig":
        vals = dict(self.values)
        for k, v in changes.items():
            vals[k.replace("__", ".")] = v
        return RunConfig(vals, self.path, self.lines)


def _beta_ladder(bmin, bmax, ratio):
    n = int(math.floor(math.log(bmax / bmin) / math.log(ratio) + 1e-9)) + 1
    return [bmin * ratio**i for i in range(n)]


def parse_text(text: str, path: str | None = None) -> RunConfig:
    raw, lines = {}, {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("syntax error: expected 'section.key = value'", line=no, path=path)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", line=no, path=path)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", line=no, path=path)
        if not value:
            raise ConfigError(f"{key}: missing value", line=no, path=path)
        try:
            raw[key] = SCHEMA[key][0](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{key}: {exc}", line=no, path=path) from None
        lines[key] = no
    vals = {k: raw.get(k, d) for k, (_, d) in SCHEMA.items()}
    cfg = RunConfig(vals, path, lines)
    _validate(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    except UnicodeDecodeError:
        raise ConfigError("config is not valid text", path=path) from None
    return parse_text(text, path)


def _validate(cfg: RunConfig):
    v = cfg.values

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", line=cfg.lines.get(key), path=cfg.path)

    if not v["domain.h"] > 0:
        fail("domain.h", "must be positive")
    shape = v["domain.shape"]
    if shape == "rectangle":
        for key in ("domain.width", "domain.height"):
            if not v[key] > 0:
                fail(key, "must be positive")
    elif shape == "disk":
        if not v["domain.radius"] > 0:
            fail("domain.radius", "must be positive")
    elif v["domain.mask_file"] is None:
        fail("domain.shape", "custom shape requires domain.mask_file")
    elif cfg.path is not None and not Path(v["domain.mask_file"]).is_absolute():
        v["domain.mask_file"] = str(Path(cfg.path).parent / v["domain.mask_file"])

    m = v["groups.m"]
    if m < 1:
        fail("groups.m", "must be >= 1")
    if v["groups.k"] is None:
        v["groups.k"] = [1] * m
    elif len(v["groups.k"]) != m:
        raise ConfigError(
            f"groups.k lists {len(v['groups.k'])} values but groups.m = {m}",
            line=cfg.lines.get("groups.k"),
            path=cfg.path,
        )
    if any(k < 1 for k in v["groups.k"]):
        fail("groups.k", "every k_i must be >= 1")
    pl = v["groups.p_ladder"]
    if any(p < 1 for p in pl) or any(b <= a for a, b in zip(pl, pl[1:])):
        fail("groups.p_ladder", "must be strictly increasing with entries >= 1")

    if not v["solver.q"] > 1:
        fail("solver.q", "q must exceed 1")
    if v["solver.beta_ladder"] is None:
        bmin, ratio = v["solver.beta_min"], v["solver.beta_ratio"]
        bmax = v["solver.beta_max"]
        if bmax is None:
            bmax = 16.0 / v["domain.h"] ** 2
        if not bmin > 0:
            fail("solver.beta_min", "must be positive")
        if not ratio > 1:
            fail("solver.beta_ratio", "must exceed 1")
        if bmax < bmin:
            fail("solver.beta_max", "must be >= solver.beta_min")
        v["solver.beta_max"] = bmax
        v["solver.beta_ladder"] = _beta_ladder(bmin, bmax, ratio)
    else:
        bl = v["solver.beta_ladder"]
        if any(b < 0 for b in bl) or any(b2 <= b1 for b1, b2 in zip(bl, bl[1:])):
            fail("solver.beta_ladder", "must be strictly increasing with entries >= 0")
        v["solver.beta_min"], v["solver.beta_max"] = bl[0], bl[-1]
    for key in ("solver.max_iter", "solver.max_backtracks", "solver.n_restarts"):
        if v[key] < 1:
            fail(key, "must be >= 1")
    if not v["solver.gtol"] > 0:
        fail("solver.gtol", "must be positive")
    if not 0 < v["solver.armijo_c"] < 1:
        fail("solver.armijo_c", "must lie in (0, 1)")
    if not 0 < v["solver.shrink"] < 1:
        fail("solver.shrink", "must lie in (0, 1)")
    if not 0 < v["solver.weight_floor"] < 1:
        fail("solver.weight_floor", "must lie in (0, 1)")
    if v["solver.seed"] < 0:
        fail("solver.seed", "must be >= 0")

    if not 0 <= v["partition.threshold_rel"] < 1:
        fail("partition.threshold_rel", "must lie in [0, 1)")

    if not 0 < v["diagnostics.r_min"] < v["diagnostics.r_max"]:
        fail("diagnostics.r_max", "need 0 < diagnostics.r_min < diagnostics.r_max")
    if v["diagnostics.n_probes"] < 1:
        fail("diagnostics.n_probes", "must be >= 1")
    if not v["diagnostics.d_probe"] > 0:
        fail("diagnostics.d_probe", "must be positive")
    if v["diagnostics.boundary_margin"] < 0:
        fail("diagnostics.boundary_margin", "must be >= 0")
    if v["eig.k"] < 1:
        fail("eig.k", "must be >= 1")
    if not v["eig.tol"] > 0:
        fail("eig.tol", "must be positive")
