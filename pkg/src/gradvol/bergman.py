"""L^2-normalized Bergman weights of monomial series by quadrature.

With a torus-invariant volume form the monomials of ``W_k`` are pairwise
orthogonal, so the Bergman weight is

    u_k(t) = (1/k) log sum_alpha exp(<alpha, t>) / ||z^alpha||^2_{k phi}

and each norm is a single integral over ``R^n`` in log coordinates.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .envelope import (
    GridSpec,
    PLConvexFunction,
    SmoothToricWeight,
    check_schedule,
    equilibrium_symbol,
)
from .errors import ConvergenceError, GradvolError, InvariantViolation, TrivialPieceError
from .lattice_series import MonomialSeries, graded_piece

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureSpec:
    tail: float = 1e-12  # integrand at the box faces, relative to its peak
    min_nodes: int = 128
    max_nodes: int = 8192
    max_nodes_2d: int = 512
    rel_tol: float = 1e-9
    start_half_width: float = 8.0
    max_half_width: float = 512.0


DEFAULT_QUADRATURE = QuadratureSpec()


def _log_integrand(alpha: np.ndarray, k: int, phi: SmoothToricWeight):
    def L(t):
        t = np.asarray(t, dtype=float)
        return t @ alpha - k * phi(t) + phi.log_volume_density(t)

    return L


def _peak(L, n: int) -> np.ndarray:
    res = minimize(lambda x: -float(L(x)), np.zeros(n), method="L-BFGS-B", bounds=[(-200.0, 200.0)] * n)
    return np.asarray(res.x, dtype=float)


def _face_points(center: np.ndarray, w: float, samples: int = 257) -> np.ndarray:
    n = len(center)
    if n == 1:
        return center + np.array([[-w], [w]])
    line = np.linspace(-w, w, samples)
    faces = []
    for ax in range(n):
        for side in (-w, w):
            others = np.meshgrid(*[line] * (n - 1), indexing="ij")
            cols = [o.reshape(-1) for o in others]
            cols.insert(ax, np.full(cols[0].shape, side))
            faces.append(np.stack(cols, axis=-1))
    return center + np.concatenate(faces)


def _tail_box(L, center: np.ndarray, peak: float, quad: QuadratureSpec) -> float:
    """Half-width ``w`` with the integrand below ``tail * peak`` on the faces of ``center + [-w, w]^n``.

    The log-integrand is concave, so its superlevel sets are convex and the
    face test bounds the integrand on the whole complement of the box.
    """
    floor = peak + math.log(quad.tail)
    w = quad.start_half_width
    while w <= quad.max_half_width:
        if np.max(L(_face_points(center, w))) <= floor:
            return w
        w *= 2
    raise ConvergenceError(f"tail not captured within half-width {quad.max_half_width}")


def _trapezoid_log(L, center: np.ndarray, w: float, nodes: int) -> float:
    n = len(center)
    axis = np.linspace(-w, w, nodes)
    h = axis[1] - axis[0]
    lw = np.full(nodes, math.log(h))
    lw[0] = lw[-1] = math.log(h / 2)
    if n == 1:
        return float(logsumexp(L((center[0] + axis)[:, None]) + lw))
    grids = np.meshgrid(*[axis] * n, indexing="ij")
    pts = np.stack(grids, axis=-1) + center
    weights = sum(np.meshgrid(*[lw] * n, indexing="ij"))
    return float(logsumexp(L(pts) + weights))


def monomial_log_norm(alpha, k: int, phi: SmoothToricWeight, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``log ||z^alpha||^2_{k phi} = log integral exp(<alpha,t> - k phi(t)) dV``.

    Trapezoid rule on a box around the peak of the integrand, sized by the tail
    rule and refined by doubling the node count until the relative change drops
    below ``quad.rel_tol``.
    """
    a = np.asarray(alpha, dtype=float)
    n = phi.n
    if a.shape != (n,):
        raise GradvolError(f"exponent {alpha} does not have length {n}")
    if np.any(a < 0) or a.sum() > k * phi.d:
        raise GradvolError(f"exponent {tuple(alpha)} outside {k * phi.d} * simplex")
    L = _log_integrand(a, k, phi)
    center = _peak(L, n)
    peak = float(L(center))
    w = _tail_box(L, center, peak, quad)
    cap = quad.max_nodes if n == 1 else quad.max_nodes_2d
    nodes = quad.min_nodes
    prev = _trapezoid_log(L, center, w, nodes)
    change = math.inf
    while nodes < cap:
        nodes *= 2
        cur = _trapezoid_log(L, center, w, nodes)
        change = abs(math.expm1(cur - prev))
        prev = cur
        if change < quad.rel_tol:
            break
    if change >= quad.rel_tol:
        log.debug("quadrature for alpha=%s k=%d stopped at %d nodes, change %.2e", tuple(alpha), k, nodes, change)
    return prev


def monomial_norm(alpha, k: int, phi: SmoothToricWeight, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    return math.exp(monomial_log_norm(alpha, k, phi, quad))


def gram_offdiagonal(alpha, beta, k: int, phi: SmoothToricWeight, quad: QuadratureSpec = DEFAULT_QUADRATURE, angles: int = 64) -> float:
    """``|<z^alpha, z^beta>| / (||z^alpha|| ||z^beta||)`` with the angular integral done numerically.

    With ``z_j = exp(t_j / 2 + i theta_j)`` the inner product factors into the
    radial integral at ``(alpha + beta) / 2`` times the mean of
    ``exp(i <alpha - beta, theta>)`` over the torus, which is evaluated on an
    ``angles``-point rule per axis rather than assumed to vanish.
    """
    a, b = np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)
    n = phi.n
    theta = np.linspace(0.0, 2 * np.pi, angles, endpoint=False)
    grids = np.meshgrid(*[theta] * n, indexing="ij")
    phase = sum((ai - bi) * g for ai, bi, g in zip(a, b, grids))
    angular = complex(np.mean(np.exp(1j * phase)))

    L = _log_integrand((a + b) / 2, k, phi)
    center = _peak(L, n)
    w = _tail_box(L, center, float(L(center)), quad)
    cross = _trapezoid_log(L, center, w, quad.min_nodes * (4 if n == 1 else 2))
    la = monomial_log_norm(alpha, k, phi, quad)
    lb = monomial_log_norm(beta, k, phi, quad)
    return abs(angular) * math.exp(cross - (la + lb) / 2)


@dataclass(frozen=True)
class BergmanLevel:
    k: int
    exponents: tuple[tuple[int, ...], ...]
    log_norms: tuple[float, ...]
    weight: SmoothToricWeight = field(repr=False)

    @property
    def norms(self) -> dict:
        return {a: math.exp(v) for a, v in zip(self.exponents, self.log_norms)}

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        A = np.array(self.exponents, dtype=float)
        ln = np.array(self.log_norms)
        flat = t.reshape(-1, A.shape[1])
        # logsumexp subtracts the max exponent
        out = logsumexp(flat @ A.T - ln, axis=1) / self.k
        return out.reshape(t.shape[:-1])

    def volume_bound_constant(self) -> float:
        """``c`` with ``u_k <= phi + (log dim W_k + c) / k``.

        Each term obeys ``exp(<alpha,t> - k phi) <= exp(-k phi*(alpha/k))``, so
        ``c = max_alpha(-k phi*(alpha/k) - log ||z^alpha||^2)`` works.
        """
        from .envelope import legendre

        k = self.k
        return max(
            -k * legendre(self.weight, tuple(Fraction(x, k) for x in a)) - ln
            for a, ln in zip(self.exponents, self.log_norms)
        )

    def check_invariants(self, grid: GridSpec, tol: float = 1e-9) -> None:
        pts = grid.points().reshape(-1, grid.n)
        if not all(math.isfinite(v) for v in self.log_norms):
            raise InvariantViolation("non-finite monomial norm")
        u = self(pts)
        bound = self.weight(pts) + (math.log(self.dim) + self.volume_bound_constant()) / self.k
        if np.any(u > bound + tol):
            raise InvariantViolation("u_k exceeds the volume bound")
        rng = np.random.default_rng(0)
        i, j = rng.integers(0, len(pts), size=(2, min(1000, len(pts))))
        mid = self((pts[i] + pts[j]) / 2)
        if np.any(mid > (u[i] + u[j]) / 2 + tol):
            raise InvariantViolation("u_k fails the midpoint convexity check")


def bergman_weight(W: MonomialSeries, k: int, phi: SmoothToricWeight, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> BergmanLevel:
    if W.n != phi.n:
        raise GradvolError(f"series has n={W.n} but weight has n={phi.n}")
    piece = graded_piece(W, k)
    if piece.dim == 0:
        raise TrivialPieceError(f"series trivial at level {k}")
    exps = tuple(piece.exponents)
    logs = tuple(monomial_log_norm(a, k, phi, quad) for a in exps)
    return BergmanLevel(k, exps, logs, phi)


# -- sandwich ----------------------------------------------------------------------


@dataclass(frozen=True)
class SandwichRow:
    k: int
    sup_gap: float
    scaled_gap: float  # sup_gap * k
    fitted_C: float


@dataclass(frozen=True)
class SandwichReport:
    box: tuple[tuple[float, float], ...]
    rows: tuple[SandwichRow, ...]
    fitted_C: float
    monotone: bool
    stability: float  # max / min of sup_gap * k over the largest three k
    reference_schedule: tuple[int, ...]
    slope_margin: float  # distance of slopes active on the box to the hull boundary

    def to_csv(self) -> str:
        lines = ["k,sup_gap,fitted_C"]
        lines += [f"{r.k},{r.sup_gap!r},{r.fitted_C!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "box": [list(b) for b in self.box],
            "rows": [{"k": r.k, "sup_gap": r.sup_gap, "scaled_gap": r.scaled_gap} for r in self.rows],
            "fitted_C": self.fitted_C,
            "monotone": self.monotone,
            "stability": self.stability,
            "reference_schedule": list(self.reference_schedule),
            "slope_margin": self.slope_margin,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def fit_constant(ks: Sequence[int], gaps: Sequence[float], last: int = 3) -> float:
    """Least-squares ``C`` in ``gap = C / k`` over the largest ``last`` levels."""
    pairs = sorted(zip(ks, gaps))[-last:]
    num = sum(g / k for k, g in pairs)
    den = sum(1 / k**2 for k, _ in pairs)
    return num / den


def slope_margin(symbol: PLConvexFunction, grid: GridSpec) -> float:
    """Smallest distance from a slope active at a grid node to the hull boundary of all slopes."""
    from .polytope import convex_hull

    pts = grid.points().reshape(-1, grid.n)
    used = np.unique(np.argmax(symbol.affine_values(pts), axis=1))
    hull = convex_hull(symbol.slopes)
    best = math.inf
    for i in used:
        s = symbol.slopes[i]
        for w, c in hull.halfspaces:
            norm = math.sqrt(sum(float(x) ** 2 for x in w))
            if norm:
                best = min(best, float(c - sum(a * b for a, b in zip(w, s))) / norm)
    return best


def reference_schedule(W: MonomialSeries, ks: Sequence[int], factor: int = 4) -> tuple[int, ...]:
    """Doubling schedule from the smallest level in ``ks`` to ``factor * max(ks)``."""
    ks = sorted(ks)
    top = factor * ks[-1]
    sched = [ks[0]]
    while sched[-1] < top:
        sched.append(sched[-1] * 2)
    return check_schedule(sched)


def sandwich_report(
    W: MonomialSeries,
    phi: SmoothToricWeight,
    box: Sequence[tuple[float, float]],
    ks: Sequence[int],
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
    reference: PLConvexFunction | None = None,
    resolution: int | None = None,
) -> SandwichReport:
    """Sup over a grid of the box of ``|u_k - P_W phi|`` for each ``k``.

    Without an explicit ``reference`` the equilibrium symbol is built from a
    doubling schedule reaching four times the largest ``k``.
    """
    ks = tuple(sorted(int(k) for k in ks))
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    grid = GridSpec(box, (resolution or (601 if W.n == 1 else 61),) * W.n)
    sched: tuple[int, ...] = ()
    if reference is None:
        sched = reference_schedule(W, ks)
        reference = equilibrium_symbol(W, phi, sched).symbol
    pts = grid.points()
    ref = reference(pts)
    gaps = []
    for k in ks:
        level = bergman_weight(W, k, phi, quad)
        gaps.append(float(np.max(np.abs(level(pts) - ref))))
    C = fit_constant(ks, gaps)
    scaled = [g * k for k, g in zip(ks, gaps)]
    top = scaled[-3:]
    rows = tuple(SandwichRow(k, g, g * k, C) for k, g in zip(ks, gaps))
    return SandwichReport(
        box,
        rows,
        C,
        all(b <= a for a, b in zip(gaps, gaps[1:])),
        max(top) / min(top) if min(top) > 0 else math.inf,
        sched,
        slope_margin(reference, grid),
    )
