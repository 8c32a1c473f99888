"""Command line entry point.

Subcommands ``volume``, ``envelope``, ``ma-mass``, ``bergman`` and ``verify``
share the series/weight flags. Flags mirror config keys; when ``--config`` is
given its values win over flags. Tabular results go to stdout as CSV (or JSON
with ``--json``); ``--out DIR`` additionally writes files and figures there.

Exit status: 0 success (``verify``: pass), 1 ``verify`` failed, 2 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import build_series, build_weight, config_from_dict, merge, parse_toml
from .errors import GradvolError

log = logging.getLogger("gradvol")

# flag dest -> (section, key)
_FLAG_KEYS = {
    "kind": ("series", "kind"),
    "n": ("series", "n"),
    "d": ("series", "d"),
    "generators": ("series", "generators"),
    "ideal": ("series", "ideal"),
    "truncation": ("series", "truncation"),
    "weight": ("weight", "name"),
    "schedule": ("schedules", "envelope"),
    "bergman_ks": ("schedules", "bergman"),
    "k_max": ("schedules", "counting_k_max"),
    "divisibility": ("schedules", "counting_divisibility"),
    "ma_half_width": ("grids", "ma_half_width"),
    "ma_resolution": ("grids", "ma_resolution"),
    "ma_smoothing": ("grids", "ma_smoothing"),
    "bergman_box": ("grids", "bergman_box"),
    "bergman_resolution": ("grids", "bergman_resolution"),
    "tolerance": ("tolerances", "joint"),
    "workers": ("run", "workers"),
    "grid_mass": ("run", "grid_mass"),
    "bergman": ("run", "bergman"),
    "out": ("output", "dir"),
    "figures": ("output", "figures"),
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _json_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}")


def _box(text: str) -> list[list[float]]:
    """``lo:hi`` per axis, comma separated."""
    try:
        return [[float(v) for v in part.split(":")] for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi[,lo:hi], got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("series and weight")
    g.add_argument("--config", type=Path, help="TOML config; its values win over flags")
    g.add_argument("--kind", choices=["complete", "generators", "ideal", "nonfg"])
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--generators", type=_json_value, help='JSON list of [degree, exponent], e.g. "[[1,[0]],[1,[2]]]"')
    g.add_argument("--ideal", type=_json_value, help='JSON list of exponents, e.g. "[[1,0],[0,2]]"')
    g.add_argument("--truncation", type=int)
    g.add_argument("--weight", choices=["fubini-study"])
    p.add_argument("--out", help="output directory for files and figures")
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    p.add_argument("--json", action="store_true", help="print JSON instead of CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradvol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gradvol {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("volume", help="counting volume, Fujita truncations and birationality")
    _add_common(p)
    p.add_argument("--k-max", type=int)
    p.add_argument("--divisibility", type=int)
    p.add_argument("--fujita", type=_int_list, help="truncation levels, e.g. 1,2,4,8")

    p = sub.add_parser("envelope", help="equilibrium symbol along a schedule")
    _add_common(p)
    p.add_argument("--schedule", type=_int_list)
    p.add_argument("--half-width", type=float, default=5.0, help="half-width of the evaluation grid")
    p.add_argument("--resolution", type=int, default=101)

    p = sub.add_parser("ma-mass", help="exact and grid Monge-Ampere mass")
    _add_common(p)
    p.add_argument("--schedule", type=_int_list)
    p.add_argument("--pl-file", type=Path, help="PL symbol text file instead of a series")
    p.add_argument("--ma-half-width", type=float)
    p.add_argument("--ma-resolution", type=int)
    p.add_argument("--ma-smoothing", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-grid", dest="grid_mass", action="store_false", default=None)

    p = sub.add_parser("bergman", help="Bergman weights and the sandwich report")
    _add_common(p)
    p.add_argument("--bergman-ks", type=_int_list)
    p.add_argument("--bergman-box", type=_box)
    p.add_argument("--bergman-resolution", type=int)

    p = sub.add_parser("verify", help="full pipeline with a pass/fail verdict")
    _add_common(p)
    p.add_argument("--schedule", type=_int_list)
    p.add_argument("--bergman-ks", type=_int_list)
    p.add_argument("--k-max", type=int)
    p.add_argument("--divisibility", type=int)
    p.add_argument("--ma-half-width", type=float)
    p.add_argument("--ma-resolution", type=int)
    p.add_argument("--ma-smoothing", type=float)
    p.add_argument("--bergman-box", type=_box)
    p.add_argument("--bergman-resolution", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-grid", dest="grid_mass", action="store_false", default=None)
    p.add_argument("--no-bergman", dest="bergman", action="store_false", default=None)
    return parser


def resolve_config(args: argparse.Namespace):
    """Flags first, then the config file on top."""
    raw: dict = {}
    for dest, (section, key) in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw.setdefault(section, {})[key] = value
    if getattr(args, "config", None) is not None:
        raw = merge(raw, parse_toml(args.config.read_text()))
    return config_from_dict(raw)


def _emit(args, text_csv: str, payload: dict, files: dict[str, str]) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n" if args.json else text_csv)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)


def cmd_volume(args) -> int:
    from .lattice_series import estimate_volume, fujita_chain, is_birational_at

    cfg = resolve_config(args)
    W = build_series(cfg.series)
    est = estimate_volume(W, cfg.counting_k_max, cfg.counting_divisibility)
    flag, index = is_birational_at(W, cfg.envelope_schedule[-1])
    rows = ["k,normalized_dim"] + [f"{k},{float(v)!r}" for k, v in est.samples]
    csv = "\n".join(rows) + "\n"
    csv += f"# extrapolated,{est.extrapolated!r}\n# birational,{flag},{index}\n"
    payload = {
        "extrapolated": est.extrapolated,
        "birational": {"flag": flag, "lattice_index": index if index != float("inf") else "inf"},
        "samples": [[k, float(v)] for k, v in est.samples],
    }
    if args.fujita:
        chain = fujita_chain(W, args.fujita, cfg.counting_k_max)
        payload["fujita"] = [[ell, e.extrapolated] for ell, e in chain]
        csv += "".join(f"# fujita,{ell},{e.extrapolated!r}\n" for ell, e in chain)
    _emit(args, csv, payload, {"volume.csv": csv})
    if args.out and cfg.figures:
        from . import plotting

        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([k for k, _ in est.samples], [float(v) for _, v in est.samples], ".", ms=3)
        ax.axhline(est.extrapolated, color="C1", lw=1)
        ax.set_xlabel("k")
        ax.set_ylabel("n! dim W_k / k^n")
        plotting._save(fig, Path(args.out) / "volume.png")
    return 0


def cmd_envelope(args) -> int:
    from .envelope import GridSpec, equilibrium_symbol, evaluate_on_grid

    cfg = resolve_config(args)
    W, phi = build_series(cfg.series), build_weight(cfg)
    eq = equilibrium_symbol(W, phi, cfg.envelope_schedule)
    text = eq.symbol.to_text()
    field = evaluate_on_grid(eq.symbol, GridSpec.cube(W.n, args.half_width, args.resolution))
    payload = {"schedule": list(eq.schedule), "gap": eq.gap, "symbol": text.splitlines()}
    _emit(args, text, payload, {"symbol.txt": text, "symbol_grid.csv": field.to_csv()})
    if args.out and cfg.figures:
        from . import plotting

        plotting.symbol_figure(eq.symbol, Path(args.out) / "symbol.png", args.half_width)
    return 0


def cmd_ma_mass(args) -> int:
    from .envelope import GridSpec, PLConvexFunction, equilibrium_symbol
    from .monge_ampere import mass_report

    if args.pl_file is not None:
        f = PLConvexFunction.from_text(args.pl_file.read_text())
        cfg = None
        n = f.n
        half = args.ma_half_width or 20.0
        res = args.ma_resolution or (4096 if n == 1 else 512 if n == 2 else 64)
        eps, workers, with_grid = args.ma_smoothing, args.workers or 1, args.grid_mass is not False
    else:
        cfg = resolve_config(args)
        W, phi = build_series(cfg.series), build_weight(cfg)
        f = equilibrium_symbol(W, phi, cfg.envelope_schedule).symbol
        n, half, res = W.n, cfg.ma_half_width, cfg.ma_resolution
        eps, workers, with_grid = cfg.ma_smoothing, cfg.workers, cfg.grid_mass
    rep = mass_report(f, GridSpec.cube(n, half, res), eps, with_grid=with_grid, workers=workers)
    d = rep.to_dict()
    csv = "exact_mass,grid_mass,active_slope_count,discrepancy\n"
    csv += ",".join("" if d[k] is None else str(d[k]) for k in ("exact_mass", "grid_mass", "active_slope_count", "discrepancy"))
    csv += "\n"
    _emit(args, csv, d, {"mass.json": rep.to_json() + "\n", "mass.csv": csv})
    return 0


def cmd_bergman(args) -> int:
    from .bergman import sandwich_report

    cfg = resolve_config(args)
    W, phi = build_series(cfg.series), build_weight(cfg)
    rep = sandwich_report(W, phi, cfg.bergman_box, cfg.bergman_schedule, resolution=cfg.bergman_resolution)
    _emit(args, rep.to_csv(), rep.to_dict(), {"sandwich.csv": rep.to_csv(), "sandwich.json": rep.to_json() + "\n"})
    if args.out and cfg.figures:
        from . import plotting
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([r.k for r in rep.rows], [r.scaled_gap for r in rep.rows], "o-")
        ax.axhline(rep.fitted_C, color="C1", lw=1)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("k")
        ax.set_ylabel("k sup|u_k - P|")
        plotting._save(fig, Path(args.out) / "sandwich.png")
    return 0


def cmd_verify(args) -> int:
    from .pipeline import emit_report, run_verify, summary_text

    cfg = resolve_config(args)
    report = run_verify(cfg)
    if args.json:
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(summary_text(report))
    emit_report(report, args.out or cfg.output_dir, figures=cfg.figures)
    return 0 if report.verdict.passed else 1


COMMANDS = {
    "volume": cmd_volume,
    "envelope": cmd_envelope,
    "ma-mass": cmd_ma_mass,
    "bergman": cmd_bergman,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GradvolError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
