"""Total non-pluripolar Monge-Ampere mass of toric symbols.

For a convex symbol ``u`` on ``R^n`` the complex Monge-Ampere mass over the
open torus is ``n! * Leb(grad u(R^n))``. Mass concentrated on the boundary
divisors (the pluripolar part) never enters, which is the zero extension.

Two independent routes are provided: an exact one for PL symbols (volume of
the hull of the active slopes) and a grid route integrating ``det D^2 u`` of a
smoothed symbol with central differences.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from . import _lp
from ._rational import format_fraction
from .envelope import (
    GridSpec,
    PLConvexFunction,
    SmoothToricWeight,
    check_schedule,
    envelope_level,
    equilibrium_symbol,
)
from .errors import HypothesisNotMet, InvariantViolation, MassError
from .lattice_series import MonomialSeries, graded_piece
from .polytope import convex_hull, mk_self_intersection, volume

log = logging.getLogger(__name__)

ROW_CHUNK = 32


# -- exact route ---------------------------------------------------------------


@lru_cache(maxsize=64)
def active_pieces(f: PLConvexFunction) -> tuple[int, ...]:
    """Indices of pieces that attain the max of ``f`` somewhere on ``R^n``."""
    best: dict = {}
    for i, (s, c) in enumerate(f.pieces):
        if s not in best or c > f.intercepts[best[s]]:
            best[s] = i
    candidates = sorted(best.values())
    slopes = [f.slopes[i] for i in candidates]
    hull = convex_hull(slopes)
    vertex_set = set(hull.vertices)
    exact_c = {i: Fraction(f.intercepts[i]) for i in candidates}

    active = []
    for i in candidates:
        if f.slopes[i] in vertex_set:
            active.append(i)
        elif _cell_nonempty(f, i, candidates, exact_c):
            active.append(i)
    return tuple(active)


def active_slopes(f: PLConvexFunction) -> frozenset:
    return frozenset(f.slopes[i] for i in active_pieces(f))


# slack above which a float witness is accepted without rational arithmetic;
# inputs here are O(10^3) at most, so rounding error is below 1e-9
FLOAT_CERTIFY_SLACK = 1e-6


def _cell_nonempty(f, i, candidates, exact_c) -> bool:
    """Exact test of ``exists t: piece_i(t) >= piece_j(t) for all j``.

    A float LP proposes a witness. It is accepted if its float slack is far above
    rounding error, otherwise it is rounded to a dyadic point and checked in
    rationals; if that fails the question goes to the exact solver.
    """
    others = [j for j in candidates if j != i]
    si = f.slopes[i]
    A = [[sj - s for sj, s in zip(f.slopes[j], si)] for j in others]
    b = [exact_c[i] - exact_c[j] for j in others]
    Af = np.array([[float(x) for x in row] for row in A])
    bf = np.array([float(x) for x in b])

    witness = _float_witness(Af, bf)
    if witness is not None:
        if np.min(bf - Af @ witness) > FLOAT_CERTIFY_SLACK:
            return True
        w = [Fraction(round(x * 2**30), 2**30) for x in witness]
        if all(sum(a * x for a, x in zip(row, w)) <= c for row, c in zip(A, b)):
            return True
    return _lp.feasible(A, b)


def _float_witness(Af: np.ndarray, bf: np.ndarray):
    n = Af.shape[1]
    # maximize a margin delta <= 1 subject to A t + delta <= b
    res = linprog(
        c=np.r_[np.zeros(n), -1.0],
        A_ub=np.c_[Af, np.ones(len(bf))],
        b_ub=bf,
        bounds=[(-1e6, 1e6)] * n + [(None, 1.0)],
        method="highs",
    )
    if res.status != 0 or res.x[-1] < 0:
        return None
    return np.asarray(res.x[:n], dtype=float)


def ma_mass_pl(f: PLConvexFunction) -> Fraction:
    """``n! vol(conv(active slopes))``; zero when that hull is lower dimensional."""
    return math.factorial(f.n) * volume(convex_hull(sorted(active_slopes(f))))


# -- grid route ------------------------------------------------------------------


def default_grid(n: int) -> GridSpec:
    return GridSpec.cube(n, 20.0, 4096 if n == 1 else 512 if n == 2 else 64)


def default_smoothing(grid: GridSpec) -> float:
    return float(2 * max((hi - lo) / r for (lo, hi), r in zip(grid.box, grid.resolution)))


def smoothed_values(f: PLConvexFunction, pts: np.ndarray, eps: float) -> np.ndarray:
    """Log-sum-exp smoothing ``eps * log sum exp(piece_i / eps)``; decreases to ``f`` as ``eps -> 0``."""
    S, c = f.slope_array(), f.intercept_array()
    flat = pts.reshape(-1, f.n)
    out = np.empty(len(flat))
    chunk = max(1, 2_000_000 // len(c))
    for i in range(0, len(flat), chunk):
        out[i : i + chunk] = eps * logsumexp((flat[i : i + chunk] @ S.T + c) / eps, axis=1)
    return out.reshape(pts.shape[:-1])


def _symbol_values(f, grid: GridSpec, eps: float | None) -> np.ndarray:
    pts = grid.points()
    if isinstance(f, PLConvexFunction):
        return smoothed_values(f, pts, eps)
    return np.asarray(f(pts), dtype=float)


def _hessian_det_chunk(u: np.ndarray, h: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """``det D^2 u`` at interior nodes in rows ``lo..hi-1``.

    In two dimensions the gradient is first taken at cell centres with the
    compact 2x2 stencil; the determinant at a node is the signed area of the
    quadrilateral spanned by the four surrounding cell gradients, divided by the
    cell area. Summed over nodes this telescopes to the area enclosed by the
    boundary gradients, so thin ridges of a smoothed PL symbol do not leave
    spurious mass behind (the 3x3 mixed stencil does).
    """
    n = u.ndim
    if n == 1:
        return (u[lo + 1 : hi + 1] - 2 * u[lo:hi] + u[lo - 1 : hi - 1]) / h[0] ** 2
    if n == 2:
        blk = u[lo - 1 : hi + 1]
        gx = (blk[1:, :-1] + blk[1:, 1:] - blk[:-1, :-1] - blk[:-1, 1:]) / (2 * h[0])
        gy = (blk[:-1, 1:] + blk[1:, 1:] - blk[:-1, :-1] - blk[1:, :-1]) / (2 * h[1])
        # cell (i, j) has corners i..i+1, j..j+1; node (i, j) sits between cells i-1..i, j-1..j
        d1x, d1y = gx[1:, 1:] - gx[:-1, :-1], gy[1:, 1:] - gy[:-1, :-1]
        d2x, d2y = gx[:-1, 1:] - gx[1:, :-1], gy[:-1, 1:] - gy[1:, :-1]
        return 0.5 * (d1x * d2y - d1y * d2x) / (h[0] * h[1])

    inner = tuple([slice(lo, hi)] + [slice(1, -1)] * (n - 1))

    def shifted(offsets):
        idx = [slice(lo + offsets[0], hi + offsets[0])]
        idx += [slice(1 + off, u.shape[ax] - 1 + off) for ax, off in enumerate(offsets) if ax > 0]
        return u[tuple(idx)]

    H = np.empty(u[inner].shape + (n, n))
    center = u[inner]
    for a in range(n):
        e = [0] * n
        e[a] = 1
        H[..., a, a] = (shifted(e) - 2 * center + shifted([-x for x in e])) / h[a] ** 2
        for b in range(a + 1, n):
            pp, pm = [0] * n, [0] * n
            pp[a] = pp[b] = pm[a] = 1
            pm[b] = -1
            mixed = (shifted(pp) - shifted(pm) - shifted([-x for x in pm]) + shifted([-x for x in pp])) / (
                4 * h[a] * h[b]
            )
            H[..., a, b] = H[..., b, a] = mixed
    return np.linalg.det(H)


def _tree_sum(values: list[float]) -> float:
    vals = list(values)
    while len(vals) > 1:
        vals = [vals[i] + vals[i + 1] if i + 1 < len(vals) else vals[i] for i in range(0, len(vals), 2)]
    return vals[0] if vals else 0.0


@dataclass(frozen=True)
class GridMass:
    mass: float
    negative_mass: float
    coverage_deficit: float
    grid: GridSpec
    eps: float | None


def _slope_hull_vertices(f) -> np.ndarray:
    if isinstance(f, PLConvexFunction):
        return convex_hull(f.slopes).vertex_array()
    return f.slope_vertices()


def _boundary_gradients(u: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Central-difference gradients on the outermost ring of interior nodes."""
    n = u.ndim
    grads = []
    inner = tuple(slice(1, -1) for _ in range(n))
    for a in range(n):
        up = [slice(1, -1)] * n
        dn = [slice(1, -1)] * n
        up[a], dn[a] = slice(2, None), slice(None, -2)
        grads.append((u[tuple(up)] - u[tuple(dn)]) / (2 * h[a]))
    G = np.stack(grads, axis=-1)
    mask = np.zeros(u[inner].shape, dtype=bool)
    for a in range(n):
        idx = [slice(None)] * n
        idx[a] = 0
        mask[tuple(idx)] = True
        idx[a] = -1
        mask[tuple(idx)] = True
    return G[mask]


def ma_mass_grid(
    f,
    grid: GridSpec | None = None,
    eps: float | None = None,
    coverage_tol: float = 0.05,
    negative_tol: float = 0.01,
    workers: int = 1,
) -> GridMass:
    """``n! * integral of max(det D^2 u_eps, 0)`` over the grid box.

    ``f`` is a PL symbol (smoothed with parameter ``eps``) or a smooth weight.
    Raises :class:`MassError` when the boundary gradients miss a vertex of the
    slope hull by more than ``coverage_tol`` ("box too small") or when negative
    determinants carry more than ``negative_tol`` of the mass ("eps too small").
    The reduction is over fixed row blocks in a fixed order, so the result does
    not depend on ``workers``.
    """
    n = f.n
    grid = grid or default_grid(n)
    if isinstance(f, PLConvexFunction):
        eps = default_smoothing(grid) if eps is None else eps
    else:
        eps = None
    u = _symbol_values(f, grid, eps)
    h = grid.spacing()

    bgrad = _boundary_gradients(u, h)
    verts = _slope_hull_vertices(f)
    deficit = max(float(np.min(np.linalg.norm(bgrad - v, axis=1))) for v in verts)
    if deficit > coverage_tol:
        raise MassError(f"box too small: boundary gradients miss the slope hull by {deficit:.3g}")

    N0 = u.shape[0]
    cell = float(np.prod(h))
    blocks = [(lo, min(lo + ROW_CHUNK, N0 - 1)) for lo in range(1, N0 - 1, ROW_CHUNK)]

    def block_sums(bounds):
        lo, hi = bounds
        det = _hessian_det_chunk(u, h, lo, hi)
        # each interior node owns the dual cell around it
        pos = np.where(det > 0, det, 0.0) * cell
        neg = np.where(det < 0, -det, 0.0) * cell
        return float(np.sum(pos)), float(np.sum(neg))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block_sums, blocks))
    else:
        parts = [block_sums(b) for b in blocks]
    nf = math.factorial(n)
    pos = nf * _tree_sum([p for p, _ in parts])
    neg = nf * _tree_sum([q for _, q in parts])
    if neg > negative_tol * max(pos, 1e-300):
        cause = "eps too small" if eps is not None else "symbol not convex"
        raise MassError(f"{cause}: negative determinant mass {neg:.3g} vs {pos:.3g}")
    return GridMass(pos, neg, deficit, grid, eps)


@dataclass(frozen=True)
class MassReport:
    exact_mass: Fraction | None
    grid_mass: float | None
    grid: GridSpec | None
    active_slope_count: int
    discrepancy: float | None

    def to_dict(self) -> dict:
        return {
            "exact_mass": None if self.exact_mass is None else format_fraction(self.exact_mass),
            "grid_mass": self.grid_mass,
            "grid": None
            if self.grid is None
            else {"box": [list(b) for b in self.grid.box], "resolution": list(self.grid.resolution)},
            "active_slope_count": self.active_slope_count,
            "discrepancy": self.discrepancy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def mass_report(f: PLConvexFunction, grid: GridSpec | None = None, eps: float | None = None, with_grid=True, workers: int = 1) -> MassReport:
    exact = ma_mass_pl(f)
    count = len(active_slopes(f))
    grid_mass = None
    if with_grid:
        gm = ma_mass_grid(f, grid, eps, workers=workers)
        grid_mass, grid = gm.mass, gm.grid
    disc = None
    if grid_mass is not None:
        disc = abs(float(exact) - grid_mass) / max(float(exact), 1e-12)
    return MassReport(exact, grid_mass, grid if with_grid else None, count, disc)


# -- comparison and convergence harnesses ------------------------------------------


def _sup_difference(g: PLConvexFunction, f: PLConvexFunction) -> float:
    """``sup_t g(t) - f(t)``; ``inf`` if some slope of ``g`` leaves ``conv(slopes f)``."""
    hull = convex_hull(f.slopes)
    S, c = f.slope_array(), f.intercept_array()
    n = f.n
    worst = -math.inf
    for s, d in g.pieces:
        if not hull.contains(s):
            return math.inf
        # max_t <s,t> + d - z  subject to  z >= S t + c
        res = linprog(
            c=np.r_[-np.array([float(x) for x in s]), 1.0],
            A_ub=np.c_[S, -np.ones(len(c))],
            b_ub=-c,
            bounds=[(None, None)] * (n + 1),
            method="highs",
        )
        if res.status != 0:
            return math.inf
        worst = max(worst, d - res.fun)
    return worst


def comparison_check(f: PLConvexFunction, g: PLConvexFunction, C: float, grid: GridSpec | None = None) -> bool:
    """If ``g <= f + C`` everywhere, check ``mass(g) <= mass(f)``.

    The hypothesis is checked on a grid and by the exact supremum of ``g - f``
    (an LP per piece of ``g``); :class:`HypothesisNotMet` is raised when it fails.
    """
    grid = grid or GridSpec.cube(f.n, 10.0, 201 if f.n == 1 else 41)
    pts = grid.points()
    if np.any(g(pts) > f(pts) + C + 1e-9):
        raise HypothesisNotMet("g exceeds f + C on the grid")
    if _sup_difference(g, f) > C + 1e-9:
        raise HypothesisNotMet("g - f exceeds C at an LP witness")
    return ma_mass_pl(g) <= ma_mass_pl(f)


def _conjugate_at(f: PLConvexFunction, s) -> float:
    """``f*(s) = min sum_i lam_i (-c_i)`` over convex weights with ``sum_i lam_i s_i = s``."""
    S, c = f.slope_array(), f.intercept_array()
    m = len(c)
    res = linprog(
        c=-c,
        A_eq=np.vstack([S.T, np.ones(m)]),
        b_eq=np.r_[np.array([float(x) for x in s]), 1.0],
        bounds=[(0, None)] * m,
        method="highs",
    )
    if res.status != 0:
        raise HypothesisNotMet(f"slope {s} outside the slope hull")
    return float(res.fun)


def generate_comparison_pairs(n: int, count: int, seed: int = 0, C_range=(0.0, 2.0), margin: float = 1e-6):
    """Random ``(f, g, C)`` with ``g <= f + C`` by construction.

    Slopes of ``g`` are random convex combinations of slopes of ``f`` with small
    denominators, and each intercept sits below ``C - f*(slope)`` so the piece
    lies under ``f + C``.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = int(rng.integers(n + 1, n + 6))
        slopes = [tuple(Fraction(int(x)) for x in rng.integers(-3, 4, size=n)) for _ in range(m)]
        if convex_hull(slopes).dim < n:
            continue
        f = PLConvexFunction.from_pieces((s, float(rng.normal())) for s in slopes)
        C = float(rng.uniform(*C_range))
        pieces = []
        for _ in range(int(rng.integers(1, 6))):
            lam = rng.integers(0, 4, size=m)
            if lam.sum() == 0:
                lam[0] = 1
            total = int(lam.sum())
            s = tuple(sum(Fraction(int(l), total) * sl[j] for l, sl in zip(lam, f.slopes)) for j in range(n))
            top = C - _conjugate_at(f, s) - margin
            pieces.append((s, top - float(rng.exponential(0.5))))
        out.append((f, PLConvexFunction.from_pieces(pieces), C))
    return out


@dataclass(frozen=True)
class MassLimit:
    levels: tuple[tuple[int, Fraction], ...]
    equilibrium_mass: Fraction


def analytic_mass_limit(W: MonomialSeries, phi: SmoothToricWeight, schedule: Sequence[int], settings=None) -> MassLimit:
    """Exact masses of ``phi_k`` along the schedule and of their union.

    Checks at runtime that masses do not decrease, that every vertex of
    ``conv A_k`` is active, and that ``mass(phi_k) = M_k^n / k^n`` exactly.
    """
    sched = check_schedule(schedule)
    eq = equilibrium_symbol(W, phi, sched, settings=settings)
    levels = []
    for k in sched:
        f = eq.levels[k]
        act = active_slopes(f)
        hull = convex_hull(graded_piece(W, k).exponents)
        missing = [v for v in hull.vertices if tuple(x / k for x in v) not in act]
        if missing:
            raise InvariantViolation(f"hull vertices {missing} of conv A_{k} are not active")
        mass = math.factorial(W.n) * volume(convex_hull(sorted(act)))
        mk = mk_self_intersection(W, k).normalized
        if mass != mk:
            raise InvariantViolation(f"level {k}: mass {mass} != M_k^n/k^n = {mk}")
        levels.append((k, mass))
    for (k0, m0), (k1, m1) in zip(levels, levels[1:]):
        if m1 < m0:
            raise InvariantViolation(f"mass decreased from {m0} at k={k0} to {m1} at k={k1}")
    return MassLimit(tuple(levels), ma_mass_pl(eq.symbol))


@dataclass(frozen=True)
class ConvergenceReport:
    regime: str
    parameters: tuple[float, ...]
    masses: tuple[float, ...]
    exact: float
    errors: tuple[float, ...]
    rate: float | None  # log-log slope of error against the parameter
    converged: bool
    subbox_masses: tuple[float, ...] = field(default=())


def _fit_rate(params, errors):
    p = np.array(params, dtype=float)
    e = np.array(errors, dtype=float)
    ok = (p > 0) & (e > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(p[ok]), np.log(e[ok]), 1)[0])


def _subbox_mass_1d(f: PLConvexFunction, eps: float, a: float, b: float) -> float:
    """Mass of ``u_eps`` on ``[a, b]``: ``u'(b) - u'(a)`` (n = 1 only)."""
    S, c = f.slope_array()[:, 0], f.intercept_array()

    def deriv(t):
        z = (S * t + c) / eps
        w = np.exp(z - z.max())
        return float(np.dot(w, S) / w.sum())

    return deriv(b) - deriv(a)


def monotone_convergence_harness(
    regime: str,
    symbol,
    parameters: Sequence[float],
    grid: GridSpec | None = None,
    tol: float = 0.01,
    bump_center=None,
) -> ConvergenceReport:
    """Grid masses along one of three approximating families.

    ``"decreasing"``: log-sum-exp smoothings ``u_eps`` of a PL ``symbol`` for the
    given ``eps``, which decrease pointwise to ``symbol``.
    ``"increasing"``: maxima over the first ``m`` pieces of ``symbol`` for each
    ``m`` in ``parameters``; these increase to ``symbol``. Masses are exact here.
    ``"uniform"``: ``symbol + delta * exp(-|t - c|^2)`` for each ``delta`` with a
    smooth ``symbol``; converges uniformly to it.
    """
    params = tuple(float(p) for p in parameters)
    if regime == "decreasing":
        exact = float(ma_mass_pl(symbol))
        masses = tuple(ma_mass_grid(symbol, grid, eps=p).mass for p in params)
        sub = ()
        if symbol.n == 1:
            sub = tuple(_subbox_mass_1d(symbol, p, -1.0, 1.0) for p in params)
        errors = tuple(abs(m - exact) for m in masses)
        converged = errors[-1] <= tol * max(exact, 1.0) and all(
            b <= a + tol for a, b in zip(errors, errors[1:])
        )
        # total masses agree to rounding; the local mass near the kink carries the rate
        rate = _fit_rate(params, [abs(m - exact) for m in sub]) if sub else _fit_rate(params, errors)
        return ConvergenceReport(regime, params, masses, exact, errors, rate, converged, sub)
    if regime == "increasing":
        exact = float(ma_mass_pl(symbol))
        pieces = symbol.pieces
        masses = tuple(float(ma_mass_pl(PLConvexFunction.from_pieces(pieces[: int(m)]))) for m in params)
        errors = tuple(abs(m - exact) for m in masses)
        converged = errors[-1] <= tol * max(exact, 1.0) and all(b >= a for a, b in zip(masses, masses[1:]))
        return ConvergenceReport(regime, params, masses, exact, errors, None, converged)
    if regime == "uniform":
        grid = grid or default_grid(symbol.n)
        center = np.zeros(symbol.n) if bump_center is None else np.asarray(bump_center, dtype=float)
        exact = float(symbol.d**symbol.n)

        masses = []
        for delta in params:
            perturbed = _Perturbed(symbol, delta, center)
            masses.append(ma_mass_grid(perturbed, grid).mass)
        errors = tuple(abs(m - exact) for m in masses)
        converged = all(e <= tol * max(exact, 1.0) for e in errors)
        return ConvergenceReport(regime, params, tuple(masses), exact, errors, _fit_rate(params, errors), converged)
    raise ValueError(f"unknown regime {regime!r}")


class _Perturbed:
    """``phi + delta * exp(-|t - center|^2)``; same slope hull as ``phi``."""

    def __init__(self, phi: SmoothToricWeight, delta: float, center: np.ndarray):
        self.phi, self.delta, self.center = phi, delta, center
        self.n, self.d = phi.n, phi.d

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.phi(t) + self.delta * np.exp(-np.sum((t - self.center) ** 2, axis=-1))

    def slope_vertices(self):
        return self.phi.slope_vertices()
