"""Figures for verification reports, rendered off-screen to PNG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .envelope import PLConvexFunction  # noqa: E402

# fixed metadata keeps repeated runs byte-identical
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def counting_figure(report, path: Path) -> Path:
    ks = np.array([k for k, _ in report.counting_samples])
    vals = np.array([float(v) for _, v in report.counting_samples])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, vals, ".", ms=3, label="n! dim W_k / k^n")
    ax.axhline(report.vol_counting, color="C1", lw=1, label=f"extrapolated {report.vol_counting:.4f}")
    ax.axhline(float(report.vol_ma_exact), color="C2", lw=1, ls="--", label="exact MA mass")
    ax.set_xlabel("k")
    ax.set_ylabel("normalized dimension")
    ax.legend()
    return _save(fig, path)


def levels_figure(report, path: Path) -> Path:
    ks = [r.k for r in report.levels]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [float(r.ma_exact) for r in report.levels], "o-", label="MA mass of level k")
    ax.plot(ks, [float(r.mk_normalized) for r in report.levels], "x", ms=9, label="M_k^n / k^n")
    ax.axhline(report.vol_counting, color="gray", lw=1, ls=":", label="counting volume")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("k")
    ax.set_ylabel("mass")
    ax.legend()
    return _save(fig, path)


def sandwich_figure(report, path: Path) -> Path:
    rows = report.bergman.rows
    ks = np.array([r.k for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [r.scaled_gap for r in rows], "o-", label="k sup|u_k - P|")
    ax.axhline(report.bergman.fitted_C, color="C1", lw=1, label=f"fitted C = {report.bergman.fitted_C:.3f}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("k")
    ax.legend()
    return _save(fig, path)


def symbol_figure(symbol: PLConvexFunction, path: Path, half_width: float = 5.0) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    if symbol.n == 1:
        t = np.linspace(-half_width, half_width, 801)
        ax.plot(t, symbol(t[:, None]))
        ax.set_xlabel("t")
    else:
        axis = np.linspace(-half_width, half_width, 201)
        T = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
        im = ax.contourf(axis, axis, symbol(T).T, levels=30)
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("t1")
        ax.set_ylabel("t2")
    ax.set_title("equilibrium symbol")
    return _save(fig, path)


def slopes_figure(symbol: PLConvexFunction, active, path: Path) -> Path:
    S = symbol.slope_array()
    act = np.array([[float(x) for x in s] for s in sorted(active)])
    fig, ax = plt.subplots(figsize=(5, 5))
    if symbol.n == 1:
        ax.plot(S[:, 0], np.zeros(len(S)), "o", mfc="none", label="pieces")
        ax.plot(act[:, 0], np.zeros(len(act)), ".", label="active")
    else:
        ax.plot(S[:, 0], S[:, 1], "o", mfc="none", label="pieces")
        ax.plot(act[:, 0], act[:, 1], ".", label="active")
        ax.set_aspect("equal")
    ax.legend()
    ax.set_title("slopes of the equilibrium symbol")
    return _save(fig, path)


def report_figures(report, out: Path) -> list[Path]:
    from .monge_ampere import active_slopes

    paths = [counting_figure(report, out / "counting.png"), levels_figure(report, out / "levels.png")]
    if report.bergman is not None:
        paths.append(sandwich_figure(report, out / "sandwich.png"))
    symbol = PLConvexFunction.from_text(report.equilibrium_text)
    paths.append(symbol_figure(symbol, out / "symbol.png"))
    paths.append(slopes_figure(symbol, active_slopes(symbol), out / "slopes.png"))
    return paths
