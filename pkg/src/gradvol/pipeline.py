"""End-to-end check that counting volume, M_k limits and Monge-Ampere mass agree."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ._rational import format_fraction
from .bergman import SandwichReport, sandwich_report
from .config import ExperimentConfig, build_series, build_weight, to_dict
from .envelope import GridSpec, equilibrium_symbol
from .lattice_series import estimate_volume, is_birational_at
from .monge_ampere import active_slopes, ma_mass_grid, ma_mass_pl
from .polytope import mk_self_intersection

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LevelRow:
    k: int
    dim: int
    mk_normalized: Fraction
    ma_exact: Fraction
    active: int


@dataclass(frozen=True)
class Verdict:
    passed: bool
    discrepancies: dict  # pair name -> relative discrepancy
    exact_equal: bool  # ma_exact == M_k^n/k^n at the final level
    branch: str  # "birational" or "lattice-index"

    @property
    def label(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass(frozen=True)
class VerificationReport:
    vol_counting: float
    vol_mk_limit: Fraction
    vol_ma_exact: Fraction
    vol_ma_grid: float | None
    birational: tuple[bool, float]
    verdict: Verdict
    tolerance: float
    counting_samples: tuple = field(repr=False)
    levels: tuple[LevelRow, ...] = field(repr=False)
    bergman: SandwichReport | None = field(repr=False)
    equilibrium_text: str = field(default="", repr=False)
    config: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        flag, index = self.birational
        return {
            "vol_counting": self.vol_counting,
            "vol_mk_limit": format_fraction(self.vol_mk_limit),
            "vol_ma_exact": format_fraction(self.vol_ma_exact),
            "vol_ma_grid": self.vol_ma_grid,
            "birational": {"flag": flag, "lattice_index": index if math.isfinite(index) else "inf"},
            "verdict": self.verdict.label,
            "verdict_branch": self.verdict.branch,
            "exact_equal": self.verdict.exact_equal,
            "discrepancies": self.verdict.discrepancies,
            "tolerance": self.tolerance,
            "levels": [
                {
                    "k": r.k,
                    "dim": r.dim,
                    "mk_normalized": format_fraction(r.mk_normalized),
                    "ma_exact": format_fraction(r.ma_exact),
                    "active_slopes": r.active,
                }
                for r in self.levels
            ],
            "bergman": None if self.bergman is None else self.bergman.to_dict(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def decide_verdict(
    vol_counting: float,
    vol_mk: Fraction,
    ma_exact: Fraction,
    mk_final: Fraction,
    birational: tuple[bool, float],
    tolerance: float,
) -> Verdict:
    """Pass iff the exact mass equals ``M_k^n/k^n`` at the final level and either

    * the series is birational and counting, M_k limit and exact mass agree
      pairwise within ``tolerance``, or
    * it is not, and the exact mass is within ``tolerance`` of
      ``lattice_index * counting`` (the factor by which the volume identity fails).
    """
    flag, index = birational
    exact_equal = ma_exact == mk_final
    if flag:
        disc = {
            "counting_vs_mk_limit": relative_gap(vol_counting, float(vol_mk)),
            "counting_vs_ma_exact": relative_gap(vol_counting, float(ma_exact)),
            "mk_limit_vs_ma_exact": relative_gap(float(vol_mk), float(ma_exact)),
        }
        branch = "birational"
    else:
        target = index * vol_counting if math.isfinite(index) else math.inf
        disc = {
            "mk_limit_vs_ma_exact": relative_gap(float(vol_mk), float(ma_exact)),
            "ma_exact_vs_index_times_counting": relative_gap(float(ma_exact), target)
            if math.isfinite(target)
            else math.inf,
        }
        branch = "lattice-index"
    passed = exact_equal and all(v <= tolerance for v in disc.values())
    return Verdict(passed, disc, exact_equal, branch)


def run_verify(config: ExperimentConfig) -> VerificationReport:
    """Counting volume, M_k limit, exact and grid Monge-Ampere mass, Bergman sandwich."""
    W = build_series(config.series)
    phi = build_weight(config)
    n = W.n

    est = estimate_volume(W, config.counting_k_max, config.counting_divisibility)
    log.info("counting volume %.6f", est.extrapolated)

    eq = equilibrium_symbol(W, phi, config.envelope_schedule)
    levels = []
    for k in config.envelope_schedule:
        f = eq.levels[k]
        mk = mk_self_intersection(W, k).normalized
        levels.append(LevelRow(k, len(f.slopes), mk, ma_mass_pl(f), len(active_slopes(f))))
    final = levels[-1]
    ma_exact = ma_mass_pl(eq.symbol)
    log.info("exact mass %s, M_k limit %s", ma_exact, final.mk_normalized)

    grid_mass = None
    if config.grid_mass:
        grid = GridSpec.cube(n, config.ma_half_width, config.ma_resolution)
        grid_mass = ma_mass_grid(eq.symbol, grid, config.ma_smoothing, workers=config.workers).mass

    birational = is_birational_at(W, final.k)
    verdict = decide_verdict(
        est.extrapolated, final.mk_normalized, ma_exact, final.mk_normalized, birational, config.joint_tolerance
    )

    berg = None
    if config.bergman:
        berg = sandwich_report(
            W, phi, config.bergman_box, config.bergman_schedule, resolution=config.bergman_resolution
        )

    return VerificationReport(
        vol_counting=est.extrapolated,
        vol_mk_limit=final.mk_normalized,
        vol_ma_exact=ma_exact,
        vol_ma_grid=grid_mass,
        birational=birational,
        verdict=verdict,
        tolerance=config.joint_tolerance,
        counting_samples=est.samples,
        levels=tuple(levels),
        bergman=berg,
        equilibrium_text=eq.symbol.to_text(),
        config=to_dict(config),
    )


def _csv(header, rows) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, Fraction):
            return format_fraction(v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    return "\n".join([",".join(header)] + [",".join(cell(v) for v in row) for row in rows]) + "\n"


def summary_text(report: VerificationReport) -> str:
    flag, index = report.birational
    lines = [
        f"verdict            {report.verdict.label} ({report.verdict.branch})",
        f"counting volume    {report.vol_counting:.6f}",
        f"M_k^n/k^n (final)  {format_fraction(report.vol_mk_limit)} = {float(report.vol_mk_limit):.6f}",
        f"exact MA mass      {format_fraction(report.vol_ma_exact)} = {float(report.vol_ma_exact):.6f}",
        "grid MA mass       " + ("-" if report.vol_ma_grid is None else f"{report.vol_ma_grid:.6f}"),
        f"birational         {flag} (lattice index {index})",
        f"exact equality     {report.verdict.exact_equal}",
        f"tolerance          {report.tolerance}",
    ]
    for name, value in sorted(report.verdict.discrepancies.items()):
        lines.append(f"  {name:34s} {value:.4g}")
    lines.append("")
    lines.append(f"{'k':>5} {'dim':>7} {'M_k^n/k^n':>14} {'MA exact':>14} {'active':>7}")
    for r in report.levels:
        lines.append(
            f"{r.k:>5} {r.dim:>7} {format_fraction(r.mk_normalized):>14} {format_fraction(r.ma_exact):>14} {r.active:>7}"
        )
    if report.bergman is not None:
        lines.append("")
        lines.append(f"Bergman sandwich on {report.bergman.box}: fitted C = {report.bergman.fitted_C:.4f}")
        for r in report.bergman.rows:
            lines.append(f"  k={r.k:<4} sup gap {r.sup_gap:.5f}  gap*k {r.scaled_gap:.4f}")
    return "\n".join(lines) + "\n"


def emit_report(report: VerificationReport, out_dir, figures: bool = True) -> list[Path]:
    """Write report.json, summary.txt, tables/*.csv and, optionally, figures/*.png."""
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    written = []

    def put(rel, text):
        path = out / rel
        path.write_text(text)
        written.append(path)

    put("report.json", report.to_json())
    put("summary.txt", summary_text(report))
    put("tables/counting.csv", _csv(["k", "normalized_dim"], [(k, float(v)) for k, v in report.counting_samples]))
    put(
        "tables/levels.csv",
        _csv(
            ["k", "dim", "mk_normalized", "ma_exact", "active_slopes", "ma_grid"],
            [
                (r.k, r.dim, r.mk_normalized, r.ma_exact, r.active, report.vol_ma_grid if r is report.levels[-1] else None)
                for r in report.levels
            ],
        ),
    )
    put("tables/equilibrium.txt", report.equilibrium_text)
    if report.bergman is not None:
        put("tables/sandwich.csv", report.bergman.to_csv())
    if figures:
        from . import plotting

        (out / "figures").mkdir(exist_ok=True)
        written += plotting.report_figures(report, out / "figures")
    return written
