"""Experiment configuration: a TOML document with fixed sections.

Grammar (every key optional unless noted)::

    [series]
    kind = "complete"          # required: complete | generators | ideal | nonfg
    n = 1                      # required except for nonfg (n = 2)
    d = 3                      # required except for nonfg (d = 1)
    generators = [[1, [0]]]    # kind = generators: [degree, exponent] pairs
    ideal = [[1, 0], [0, 2]]   # kind = ideal: exponents of the monomial ideal
    truncation = 0             # > 0 replaces the series by its degree-ell truncation

    [weight]
    name = "fubini-study"
    d = 3                      # defaults to series.d and must match it

    [schedules]
    envelope = [1, 2, 4, 8]    # divisibility-ordered
    bergman = [4, 8, 16]       # divisibility-ordered
    counting_k_max = 256
    counting_divisibility = 1

    [grids]
    ma_half_width = 20.0
    ma_resolution = 4096       # per axis; default 4096 (n = 1) or 512 (n = 2)
    ma_smoothing = 0.0         # 0 selects twice the grid step
    bergman_box = [[-3.0, 3.0]]
    bergman_resolution = 0     # 0 selects 601 (n = 1) or 61 (n = 2)

    [tolerances]
    joint = 0.05

    [run]
    grid_mass = true
    bergman = true
    workers = 1

    [output]
    dir = "gradvol-out"
    figures = true
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

KINDS = ("complete", "generators", "ideal", "nonfg")
WEIGHTS = ("fubini-study",)

_SCHEMA: dict[str, dict[str, type | tuple[type, ...]]] = {
    "series": {"kind": str, "n": int, "d": int, "generators": list, "ideal": list, "truncation": int},
    "weight": {"name": str, "d": int},
    "schedules": {"envelope": list, "bergman": list, "counting_k_max": int, "counting_divisibility": int},
    "grids": {
        "ma_half_width": (int, float),
        "ma_resolution": int,
        "ma_smoothing": (int, float),
        "bergman_box": list,
        "bergman_resolution": int,
    },
    "tolerances": {"joint": (int, float)},
    "run": {"grid_mass": bool, "bergman": bool, "workers": int},
    "output": {"dir": str, "figures": bool},
}


@dataclass(frozen=True)
class SeriesSpec:
    kind: str
    n: int
    d: int
    generators: tuple = ()
    ideal: tuple = ()
    truncation: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    series: SeriesSpec
    weight_name: str = "fubini-study"
    weight_d: int = 1
    envelope_schedule: tuple[int, ...] = (1, 2, 4, 8)
    bergman_schedule: tuple[int, ...] = (4, 8, 16)
    counting_k_max: int = 256
    counting_divisibility: int = 1
    ma_half_width: float = 20.0
    ma_resolution: int = 4096
    ma_smoothing: float | None = None
    bergman_box: tuple[tuple[float, float], ...] = ((-3.0, 3.0),)
    bergman_resolution: int | None = None
    joint_tolerance: float = 0.05
    grid_mass: bool = True
    bergman: bool = True
    workers: int = 1
    output_dir: str = "gradvol-out"
    figures: bool = True
    raw: dict = field(default_factory=dict, repr=False, compare=False)


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+), column (\d+)", msg)
        where = f"line {m.group(1)}, column {m.group(2)}" if m else "unknown position"
        raise ConfigError(f"parse error at {where}: {msg}") from exc


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML config; see the module docstring for keys."""
    return config_from_dict(parse_toml(text))


def merge(base: dict, override: dict) -> dict:
    """Section-wise merge; keys in ``override`` win."""
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for section, values in override.items():
        if isinstance(values, dict) and isinstance(out.get(section), dict):
            out[section].update(values)
        else:
            out[section] = values
    return out


def _check_types(raw: dict) -> None:
    for section, values in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            expected = _SCHEMA[section][key]
            # bool is an int subclass; do not accept it for numeric fields
            if isinstance(value, bool) and expected is not bool:
                raise ConfigError(f"{section}.{key} must not be a boolean")
            if not isinstance(value, expected):
                raise ConfigError(f"{section}.{key} has type {type(value).__name__}")


def _schedule(name: str, value) -> tuple[int, ...]:
    if not value or not all(isinstance(k, int) and not isinstance(k, bool) for k in value):
        raise ConfigError(f"{name} must be a nonempty list of integers")
    if any(k < 1 for k in value):
        raise ConfigError(f"{name} levels must be positive")
    for a, b in zip(value, value[1:]):
        if b <= a or b % a:
            raise ConfigError(f"{name} {list(value)} is not ordered by divisibility")
    return tuple(value)


def _positive(name: str, value, strict=True):
    if value is None:
        return None
    if not math.isfinite(value) or value < 0 or (strict and value == 0):
        raise ConfigError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value}")
    return value


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_types(raw)
    s = raw.get("series")
    if not s or "kind" not in s:
        raise ConfigError("series.kind is required")
    kind = s["kind"]
    if kind not in KINDS:
        raise ConfigError(f"series.kind must be one of {KINDS}, got {kind!r}")
    if kind == "nonfg":
        n, d = s.get("n", 2), s.get("d", 1)
        if (n, d) != (2, 1):
            raise ConfigError("series.n and series.d are fixed to 2 and 1 for nonfg")
    else:
        for key in ("n", "d"):
            if key not in s:
                raise ConfigError(f"series.{key} is required for kind {kind!r}")
        n, d = s["n"], s["d"]
        _positive("series.n", n)
        _positive("series.d", d)
    gens: tuple = ()
    ideal: tuple = ()
    if kind == "generators":
        if "generators" not in s:
            raise ConfigError("series.generators is required for kind 'generators'")
        try:
            gens = tuple((int(deg), tuple(int(x) for x in alpha)) for deg, alpha in s["generators"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("series.generators must be a list of [degree, exponent] pairs") from exc
    elif "generators" in s:
        raise ConfigError(f"series.generators is only valid for kind 'generators'")
    if kind == "ideal":
        if not s.get("ideal"):
            raise ConfigError("series.ideal is required for kind 'ideal'")
        try:
            ideal = tuple(tuple(int(x) for x in g) for g in s["ideal"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("series.ideal must be a list of exponents") from exc
    elif "ideal" in s:
        raise ConfigError("series.ideal is only valid for kind 'ideal'")
    for a in [g for _, g in gens] + list(ideal):
        if len(a) != n:
            raise ConfigError(f"exponent {list(a)} does not have length series.n = {n}")
    truncation = s.get("truncation", 0)
    _positive("series.truncation", truncation, strict=False)
    series = SeriesSpec(kind, n, d, gens, ideal, truncation)

    w = raw.get("weight", {})
    wname = w.get("name", "fubini-study")
    if wname not in WEIGHTS:
        raise ConfigError(f"weight.name must be one of {WEIGHTS}, got {wname!r}")
    wd = w.get("d", d)
    if wd != d:
        raise ConfigError(f"weight.d = {wd} does not match series.d = {d}")

    sc = raw.get("schedules", {})
    env = _schedule("schedules.envelope", sc.get("envelope", [1, 2, 4, 8]))
    berg = _schedule("schedules.bergman", sc.get("bergman", [4, 8, 16] if n == 1 else [2, 4, 8]))
    k_max = _positive("schedules.counting_k_max", sc.get("counting_k_max", 256 if n == 1 else 120))
    div = _positive("schedules.counting_divisibility", sc.get("counting_divisibility", 1))
    if div > k_max:
        raise ConfigError("schedules.counting_divisibility exceeds schedules.counting_k_max")

    g = raw.get("grids", {})
    half = float(_positive("grids.ma_half_width", g.get("ma_half_width", 20.0)))
    res = _positive("grids.ma_resolution", g.get("ma_resolution", 4096 if n == 1 else 512 if n == 2 else 64))
    if res < 3:
        raise ConfigError("grids.ma_resolution must be at least 3")
    smoothing = _positive("grids.ma_smoothing", g.get("ma_smoothing", 0.0), strict=False) or None
    box_raw = g.get("bergman_box", [[-3.0, 3.0]] * n)
    try:
        box = tuple((float(lo), float(hi)) for lo, hi in box_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("grids.bergman_box must be a list of [lo, hi] pairs") from exc
    if len(box) != n or any(hi <= lo for lo, hi in box):
        raise ConfigError(f"grids.bergman_box must give {n} nonempty intervals")
    bres = _positive("grids.bergman_resolution", g.get("bergman_resolution", 0), strict=False) or None

    tol = float(_positive("tolerances.joint", raw.get("tolerances", {}).get("joint", 0.05)))

    r = raw.get("run", {})
    workers = _positive("run.workers", r.get("workers", 1))
    o = raw.get("output", {})

    return ExperimentConfig(
        series=series,
        weight_name=wname,
        weight_d=wd,
        envelope_schedule=env,
        bergman_schedule=berg,
        counting_k_max=k_max,
        counting_divisibility=div,
        ma_half_width=half,
        ma_resolution=res,
        ma_smoothing=smoothing,
        bergman_box=box,
        bergman_resolution=bres,
        joint_tolerance=tol,
        grid_mass=r.get("grid_mass", True),
        bergman=r.get("bergman", True),
        workers=workers,
        output_dir=o.get("dir", "gradvol-out"),
        figures=o.get("figures", True),
        raw=raw,
    )


def build_series(spec: SeriesSpec):
    from . import lattice_series as ls

    if spec.kind == "complete":
        W = ls.complete_series(spec.n, spec.d)
    elif spec.kind == "generators":
        W = ls.series_from_generators(spec.n, spec.d, spec.generators)
    elif spec.kind == "ideal":
        W = ls.ideal_series(spec.n, spec.d, spec.ideal)
    else:
        W = ls.nonfg_series()
    return ls.truncate(W, spec.truncation) if spec.truncation else W


def build_weight(config: ExperimentConfig):
    from .envelope import fubini_study_weight

    return fubini_study_weight(config.series.n, config.weight_d)


def to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Normalized config echo for reports."""
    s = config.series
    return {
        "series": {
            "kind": s.kind,
            "n": s.n,
            "d": s.d,
            "generators": [[deg, list(a)] for deg, a in s.generators],
            "ideal": [list(a) for a in s.ideal],
            "truncation": s.truncation,
        },
        "weight": {"name": config.weight_name, "d": config.weight_d},
        "schedules": {
            "envelope": list(config.envelope_schedule),
            "bergman": list(config.bergman_schedule),
            "counting_k_max": config.counting_k_max,
            "counting_divisibility": config.counting_divisibility,
        },
        "grids": {
            "ma_half_width": config.ma_half_width,
            "ma_resolution": config.ma_resolution,
            "ma_smoothing": config.ma_smoothing,
            "bergman_box": [list(b) for b in config.bergman_box],
            "bergman_resolution": config.bergman_resolution,
        },
        "tolerances": {"joint": config.joint_tolerance},
        "run": {"grid_mass": config.grid_mass, "bergman": config.bergman, "workers": config.workers},
    }
