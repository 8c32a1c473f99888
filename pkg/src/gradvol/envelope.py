"""Toric symbols in log coordinates: smooth weights, Legendre transforms, PL envelopes.

With ``t_i = log |z_i|^2`` a torus-invariant psh weight on ``O(d)`` becomes a
convex function of ``t`` whose gradient lies in ``d * simplex``. A normalized
monomial section ``c z^alpha`` of ``W_k`` contributes the affine function
``<alpha/k, t> - phi*(alpha/k)`` and the level weight ``phi_k`` is the max of
those pieces.
"""
from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from ._rational import format_fraction, parse_fraction, to_fraction_vector
from .errors import ConvergenceError, GradvolError, InvariantViolation, TrivialPieceError
from .lattice_series import MonomialSeries, graded_piece

GRID_CAP = 1 << 24


@dataclass(frozen=True, eq=False)
class SmoothToricWeight:
    """Smooth convex symbol ``phi(t)`` of a metric on ``O(d)`` plus a volume density.

    ``value``, ``gradient`` and ``log_volume_density`` take arrays of shape
    ``(..., n)``.
    """

    n: int
    d: int
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    log_volume_density: Callable[[np.ndarray], np.ndarray]
    _conjugates: dict = field(default_factory=dict, repr=False)

    def __call__(self, t) -> np.ndarray:
        return self.value(np.asarray(t, dtype=float))

    def volume_density(self, t) -> np.ndarray:
        return np.exp(self.log_volume_density(np.asarray(t, dtype=float)))

    def slope_vertices(self) -> np.ndarray:
        """Vertices of the closed gradient image ``d * simplex``."""
        return np.vstack([np.zeros(self.n), self.d * np.eye(self.n)])


def _log1p_sum_exp(t: np.ndarray) -> np.ndarray:
    zeros = np.zeros(t.shape[:-1] + (1,))
    return logsumexp(np.concatenate([zeros, t], axis=-1), axis=-1)


def fubini_study_weight(n: int, d: int) -> SmoothToricWeight:
    """``phi(t) = d log(1 + sum e^{t_i})`` with the Fubini-Study volume density.

    The density ``exp(sum t_i - (n+1) log(1 + sum e^{t_i}))`` integrates to ``1/n!``.
    """
    if n < 1 or d < 1:
        raise GradvolError(f"need n >= 1 and d >= 1, got n={n}, d={d}")

    def value(t):
        return d * _log1p_sum_exp(t)

    def gradient(t):
        zeros = np.zeros(t.shape[:-1] + (1,))
        return d * softmax(np.concatenate([zeros, t], axis=-1), axis=-1)[..., 1:]

    def log_density(t):
        return np.sum(t, axis=-1) - (n + 1) * _log1p_sum_exp(t)

    return SmoothToricWeight(n, d, "fubini-study", value, gradient, log_density)


# -- Legendre transform --------------------------------------------------------


@dataclass(frozen=True)
class LegendreSettings:
    box: float = 40.0
    scan_points: int = 64
    sweeps: int = 60
    tol: float = 1e-10


def in_slope_polytope(s: Sequence[Fraction], d: int) -> bool:
    return all(x >= 0 for x in s) and sum(s) <= d


def _maximize_concave(fun, grad, n: int, box: float, scan_points: int, sweeps: int, tol: float):
    """Maximize a concave function on ``[-box, box]^n``; returns ``(argmax, value)``.

    Coarse grid scan, quasi-Newton refinement with box bounds, then a
    coordinate-wise golden-section polish.
    """
    axis = np.linspace(-box, box, scan_points)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    vals = fun(grid)
    x = grid[int(np.argmax(vals))].copy()
    res = minimize(
        lambda y: -float(fun(y)),
        x,
        jac=(lambda y: -grad(y)) if grad is not None else None,
        method="L-BFGS-B",
        bounds=[(-box, box)] * n,
        options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 2000},
    )
    x = np.clip(res.x, -box, box)
    best = float(fun(x))
    h = 2 * box / (scan_points - 1)
    for _ in range(sweeps):
        moved = 0.0
        for i in range(n):
            xi, fi = _golden_line(fun, x, i, h, box, tol)
            if fi >= best:
                moved = max(moved, abs(xi - x[i]))
                x[i], best = xi, fi
        h = max(4 * moved, 1e3 * tol)
        if moved < tol:
            break
    return x, best


def _golden_line(fun, x, i, h, box, tol):
    invphi = (math.sqrt(5) - 1) / 2
    lo, hi = max(-box, x[i] - h), min(box, x[i] + h)
    for _ in range(64):
        a, b = lo, hi
        y = x.copy()

        def f(v):
            y[i] = v
            return float(fun(y))

        c, e = b - invphi * (b - a), a + invphi * (b - a)
        fc, fe = f(c), f(e)
        while b - a > tol:
            if fc >= fe:
                b, e, fe = e, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, e, fe
                e = a + invphi * (b - a)
                fe = f(e)
        xm = 0.5 * (a + b)
        at_lo = xm - lo < 2 * tol and lo > -box
        at_hi = hi - xm < 2 * tol and hi < box
        if not (at_lo or at_hi):
            return xm, f(xm)
        h *= 4
        lo, hi = max(-box, x[i] - h), min(box, x[i] + h)
    raise ConvergenceError(f"golden-section search failed to bracket along axis {i}")


def legendre(phi: SmoothToricWeight, s, settings: LegendreSettings | None = None) -> float:
    """``phi*(s) = sup_t <s, t> - phi(t)``; ``+inf`` for ``s`` outside ``d * simplex``.

    For slopes on the boundary of ``d * simplex`` the supremum is taken over the
    clipped box ``[-box, box]^n``; for the log-sum-exp weights used here the
    remaining error decays like ``exp(-box)``.
    """
    settings = settings or LegendreSettings()
    s = to_fraction_vector(s)
    if len(s) != phi.n:
        raise GradvolError(f"slope {s} has wrong length for n={phi.n}")
    if not in_slope_polytope(s, phi.d):
        return math.inf
    key = (s, settings)
    cached = phi._conjugates.get(key)
    if cached is not None:
        return cached
    sf = np.array([float(x) for x in s])

    def objective(t):
        return np.asarray(t) @ sf - phi.value(np.asarray(t))

    def objective_grad(t):
        return sf - phi.gradient(np.asarray(t))

    _, val = _maximize_concave(
        objective, objective_grad, phi.n, settings.box, settings.scan_points, settings.sweeps, settings.tol
    )
    phi._conjugates[key] = val
    return val


# -- piecewise-linear convex functions ------------------------------------------


@dataclass(frozen=True)
class PLConvexFunction:
    """``t -> max_i <slope_i, t> + intercept_i`` with exact rational slopes."""

    slopes: tuple[tuple[Fraction, ...], ...]
    intercepts: tuple[float, ...]

    def __post_init__(self):
        if not self.slopes:
            raise GradvolError("PL function needs at least one piece")
        if len(self.slopes) != len(self.intercepts):
            raise GradvolError("slopes and intercepts differ in length")
        pairs = sorted(set(zip(map(to_fraction_vector, self.slopes), map(float, self.intercepts))))
        object.__setattr__(self, "slopes", tuple(p[0] for p in pairs))
        object.__setattr__(self, "intercepts", tuple(float(p[1]) for p in pairs))

    @classmethod
    def from_pieces(cls, pieces) -> "PLConvexFunction":
        pieces = list(pieces)
        return cls(tuple(to_fraction_vector(s) for s, _ in pieces), tuple(float(c) for _, c in pieces))

    @property
    def n(self) -> int:
        return len(self.slopes[0])

    @property
    def pieces(self) -> list[tuple[tuple[Fraction, ...], float]]:
        return list(zip(self.slopes, self.intercepts))

    @cached_property
    def _S(self) -> np.ndarray:
        return np.array([[float(x) for x in s] for s in self.slopes], dtype=float)

    @cached_property
    def _c(self) -> np.ndarray:
        return np.array(self.intercepts, dtype=float)

    def slope_array(self) -> np.ndarray:
        return self._S

    def intercept_array(self) -> np.ndarray:
        return self._c

    def affine_values(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return t @ self.slope_array().T + self.intercept_array()

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        S, c = self.slope_array(), self.intercept_array()
        flat = t.reshape(-1, self.n)
        out = np.empty(len(flat))
        chunk = max(1, 2_000_000 // len(c))
        for i in range(0, len(flat), chunk):
            out[i : i + chunk] = np.max(flat[i : i + chunk] @ S.T + c, axis=1)
        return out.reshape(t.shape[:-1])

    def to_text(self) -> str:
        """One ``slope_1 ... slope_n intercept`` line per piece; slopes as ``p/q``."""
        return "".join(
            " ".join(format_fraction(x) for x in s) + f" {c!r}\n" for s, c in zip(self.slopes, self.intercepts)
        )

    @classmethod
    def from_text(cls, text: str) -> "PLConvexFunction":
        pieces = []
        for line in text.splitlines():
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            pieces.append((tuple(parse_fraction(x) for x in tok[:-1]), float(tok[-1])))
        return cls.from_pieces(pieces)


def envelope_level(W: MonomialSeries, k: int, phi: SmoothToricWeight, settings: LegendreSettings | None = None) -> PLConvexFunction:
    """``phi_k(t) = max_{alpha in A_k} <alpha/k, t> - phi*(alpha/k)``."""
    if W.n != phi.n:
        raise GradvolError(f"series has n={W.n} but weight has n={phi.n}")
    piece = graded_piece(W, k)
    if piece.dim == 0:
        raise TrivialPieceError(f"series trivial at level {k}")
    slopes, intercepts = [], []
    for alpha in piece.exponents:
        s = tuple(Fraction(a, k) for a in alpha)
        conj = legendre(phi, s, settings)
        if not math.isfinite(conj):
            raise InvariantViolation(f"slope {s} outside d*simplex; A_k must lie in k*d*simplex")
        slopes.append(s)
        intercepts.append(-conj)
    return PLConvexFunction(tuple(slopes), tuple(intercepts))


@dataclass(frozen=True)
class Equilibrium:
    symbol: PLConvexFunction
    schedule: tuple[int, ...]
    levels: dict = field(repr=False)
    gap: float  # sup-norm gap between the last two levels on the reference box


def check_schedule(schedule: Sequence[int]) -> tuple[int, ...]:
    sched = tuple(int(k) for k in schedule)
    if not sched:
        raise GradvolError("schedule must be nonempty")
    if any(k < 1 for k in sched):
        raise GradvolError(f"schedule levels must be positive: {sched}")
    for a, b in zip(sched, sched[1:]):
        if b <= a or b % a:
            raise GradvolError(f"schedule {sched} is not ordered by divisibility")
    return sched


def doubling_schedule(W: MonomialSeries, steps: int = 4, start: int | None = None) -> tuple[int, ...]:
    """``(l, 2l, 4l, ...)`` with ``l`` the smallest nontrivial level."""
    ell = start
    if ell is None:
        ell = next(k for k in range(1, 1000) if graded_piece(W, k).dim > 0)
    return tuple(ell * 2**j for j in range(steps))


def equilibrium_symbol(
    W: MonomialSeries,
    phi: SmoothToricWeight,
    schedule: Sequence[int],
    reference_box: float = 5.0,
    reference_points: int | None = None,
    settings: LegendreSettings | None = None,
) -> Equilibrium:
    """Union of the pieces of ``phi_k`` over a divisibility-ordered schedule.

    For each slope only the largest intercept is kept, so the result equals the
    pointwise max of the levels. That max of finitely many affine functions is
    continuous, hence already its own upper-semicontinuous regularization.
    """
    sched = check_schedule(schedule)
    levels = {k: envelope_level(W, k, phi, settings) for k in sched}
    best: dict = {}
    for f in levels.values():
        for s, c in f.pieces:
            if s not in best or c > best[s]:
                best[s] = c
    symbol = PLConvexFunction(tuple(best), tuple(best.values()))
    gap = 0.0
    if len(sched) > 1:
        res = reference_points or (1001 if W.n == 1 else 101)
        g = GridSpec.cube(W.n, reference_box, res)
        pts = g.points()
        gap = float(np.max(np.abs(levels[sched[-1]](pts) - levels[sched[-2]](pts))))
    return Equilibrium(symbol, sched, levels, gap)


# -- grids -----------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    box: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        if len(self.box) != len(self.resolution):
            raise GradvolError("box and resolution have different dimensions")
        if any(hi <= lo for lo, hi in self.box):
            raise GradvolError(f"empty grid box {self.box}")
        if any(r < 2 for r in self.resolution):
            raise GradvolError(f"resolution must be >= 2 per axis, got {self.resolution}")
        if math.prod(self.resolution) > GRID_CAP:
            raise GradvolError(f"grid of {math.prod(self.resolution)} nodes exceeds cap {GRID_CAP}")

    @classmethod
    def cube(cls, n: int, half_width: float, resolution: int) -> "GridSpec":
        return cls(((-half_width, half_width),) * n, (resolution,) * n)

    @property
    def n(self) -> int:
        return len(self.box)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, r) for (lo, hi), r in zip(self.box, self.resolution)]

    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (r - 1) for (lo, hi), r in zip(self.box, self.resolution)])

    def points(self) -> np.ndarray:
        """Nodes of shape ``resolution + (n,)`` in row-major order."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


@dataclass(frozen=True)
class GridField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.size != math.prod(self.grid.resolution):
            raise GradvolError("field size does not match the grid resolution")

    def to_csv(self) -> str:
        lines = [
            "# box=" + ";".join(f"{lo!r}:{hi!r}" for lo, hi in self.grid.box),
            "# resolution=" + "x".join(str(r) for r in self.grid.resolution),
            ",".join([f"t{i + 1}" for i in range(self.grid.n)] + ["value"]),
        ]
        pts = self.grid.points().reshape(-1, self.grid.n)
        for p, v in zip(pts, self.values.reshape(-1)):
            lines.append(",".join(repr(float(x)) for x in p) + f",{float(v)!r}")
        return "\n".join(lines) + "\n"


def evaluate_on_grid(f, grid: GridSpec) -> GridField:
    """Dense evaluation of a PL function or smooth weight (every piece is used)."""
    return GridField(grid, np.asarray(f(grid.points()), dtype=float))
