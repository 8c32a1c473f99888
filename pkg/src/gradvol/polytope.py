"""Exact rational convex hulls, volumes and lattice points.

All arithmetic here is over Python integers and :class:`fractions.Fraction`.
Input points are scaled to a common integer lattice before any predicate is
evaluated, so orientation tests and volumes are exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from ._rational import (
    common_denominator,
    format_fraction,
    int_det,
    nullspace,
    parse_fraction,
    rref,
    to_fraction_vector,
)
from .errors import EnumerationCapError, GradvolError, InvariantViolation, TrivialPieceError

DEFAULT_CAP = 10**7
# input-size cap for hulls in ambient dimension > 3
HIGH_DIM_POINT_CAP = 2000

Vector = tuple[Fraction, ...]
Halfspace = tuple[Vector, Fraction]


@dataclass(frozen=True)
class RationalPolytope:
    """Convex polytope with exact V- and H-representations.

    ``halfspaces`` are pairs ``(normal, offset)`` meaning ``normal . x <= offset``.
    When the hull is lower dimensional the affine span is encoded by opposite
    pairs of halfspaces.
    """

    vertices: tuple[Vector, ...]
    halfspaces: tuple[Halfspace, ...]
    dim: int
    ambient_dim: int
    _volume: Fraction = field(default=Fraction(0), repr=False, compare=False)

    @property
    def is_full_dimensional(self) -> bool:
        return self.dim == self.ambient_dim

    def contains(self, x) -> bool:
        x = to_fraction_vector(x)
        return all(sum(a * b for a, b in zip(w, x)) <= c for w, c in self.halfspaces)

    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices], dtype=float)


def convex_hull(points: Sequence[Sequence]) -> RationalPolytope:
    """Exact convex hull of a nonempty finite set of rational points."""
    pts = sorted(set(to_fraction_vector(p) for p in points))
    if not pts:
        raise GradvolError("convex_hull needs at least one point")
    n = len(pts[0])
    if any(len(p) != n for p in pts):
        raise GradvolError("points have inconsistent dimensions")
    scale = common_denominator(pts)
    ipts = [tuple(int(x * scale) for x in p) for p in pts]
    if n > 3 and len(ipts) > HIGH_DIM_POINT_CAP:
        raise EnumerationCapError(
            f"hull input of {len(ipts)} points exceeds cap {HIGH_DIM_POINT_CAP} for n={n}"
        )

    base = ipts[0]
    diffs = [[a - b for a, b in zip(p, base)] for p in ipts[1:]]
    _, pivots = rref(diffs) if diffs else ([], [])
    m = len(pivots)

    proj = [tuple(p[c] for c in pivots) for p in ipts]
    if m == 0:
        vert_idx, facets, vol = [0], [], 0
    elif m == 1:
        vert_idx, facets, vol = _hull_1d(proj)
    elif m == 2:
        vert_idx, facets, vol = _hull_2d(proj)
    else:
        vert_idx, facets, vol = _hull_nd(proj, m)

    # lift facets of the projection; valid for the original points as well
    halfspaces: list[tuple[tuple[int, ...], int]] = []
    for w, b in facets:
        full = [0] * n
        for c, wc in zip(pivots, w):
            full[c] = wc
        halfspaces.append((tuple(full), b))
    if m < n:
        for w in nullspace(diffs, n) if diffs else _identity(n):
            wi = tuple(int(x) for x in w)
            b = sum(a * c for a, c in zip(wi, base))
            halfspaces.append((wi, b))
            halfspaces.append((tuple(-a for a in wi), -b))

    _validate(ipts, [ipts[i] for i in vert_idx], halfspaces, m)

    vertices = tuple(sorted(tuple(Fraction(x, scale) for x in ipts[i]) for i in vert_idx))
    hs = tuple(
        sorted(
            {_normalize_halfspace(w, Fraction(b, scale)) for w, b in halfspaces},
        )
    )
    volume = Fraction(vol, math.factorial(n) * scale**n) if m == n else Fraction(0)
    return RationalPolytope(vertices, hs, m, n, volume)


def volume(P: RationalPolytope) -> Fraction:
    """Exact Lebesgue volume; zero for lower-dimensional polytopes."""
    return P._volume if P.is_full_dimensional else Fraction(0)


def lattice_points(P: RationalPolytope, cap: int = DEFAULT_CAP) -> list[tuple[int, ...]]:
    """Integer points of a bounded polytope in lexicographic order."""
    n = P.ambient_dim
    lo = [math.ceil(min(v[i] for v in P.vertices)) for i in range(n)]
    hi = [math.floor(max(v[i] for v in P.vertices)) for i in range(n)]
    if any(a > b for a, b in zip(lo, hi)):
        return []
    box = math.prod(b - a + 1 for a, b in zip(lo, hi))
    if box > 64 * cap:
        raise EnumerationCapError(f"bounding box of {box} points exceeds 64 x cap {cap}")
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.ones(len(grid), dtype=bool)
    for w, c in P.halfspaces:
        den = math.lcm(c.denominator, *(x.denominator for x in w))
        wi = np.array([int(x * den) for x in w], dtype=np.int64)
        keep &= grid @ wi <= int(c * den)
    out = grid[keep]
    if len(out) > cap:
        raise EnumerationCapError(f"{len(out)} lattice points exceed cap {cap}")
    return [tuple(int(x) for x in row) for row in out]


class SelfIntersection(NamedTuple):
    value: Fraction
    normalized: Fraction


def mk_self_intersection(W, k: int) -> SelfIntersection:
    """``M_k^n = n! vol(conv A_k)`` together with ``M_k^n / k^n``."""
    from .lattice_series import graded_piece

    piece = graded_piece(W, k)
    if piece.dim == 0:
        raise TrivialPieceError(f"series trivial at level {k}")
    P = convex_hull(piece.exponents)
    value = math.factorial(W.n) * volume(P)
    return SelfIntersection(value, value / Fraction(k) ** W.n)


def to_vrep_text(P: RationalPolytope) -> str:
    """One vertex per line, coordinates as ``p/q`` separated by spaces."""
    return "".join(" ".join(format_fraction(x) for x in v) + "\n" for v in P.vertices)


def from_vrep_text(text: str) -> RationalPolytope:
    pts = [
        tuple(parse_fraction(tok) for tok in line.split())
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    return convex_hull(pts)


# -- hull kernels (integer coordinates in the affine span) -------------------


def _identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def _hull_1d(pts):
    xs = [p[0] for p in pts]
    lo, hi = min(xs), max(xs)
    idx = [xs.index(lo), xs.index(hi)]
    return idx, [((1,), hi), ((-1,), -lo)], hi - lo


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_2d(pts):
    order = sorted(range(len(pts)), key=lambda i: pts[i])
    lower: list[int] = []
    for i in order:
        while len(lower) >= 2 and _cross(pts[lower[-2]], pts[lower[-1]], pts[i]) <= 0:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(order):
        while len(upper) >= 2 and _cross(pts[upper[-2]], pts[upper[-1]], pts[i]) <= 0:
            upper.pop()
        upper.append(i)
    ring = lower[:-1] + upper[:-1]  # counter-clockwise
    facets = []
    twice_area = 0
    for a, b in zip(ring, ring[1:] + ring[:1]):
        (x0, y0), (x1, y1) = pts[a], pts[b]
        w = (y1 - y0, x0 - x1)  # outward for a ccw ring
        facets.append((w, w[0] * x0 + w[1] * y0))
        twice_area += x0 * y1 - x1 * y0
    return ring, facets, twice_area


def _facet_plane(pts, idx, interior):
    """Outward integer normal and offset of the hyperplane through ``idx``."""
    p0 = pts[idx[0]]
    rows = [[a - b for a, b in zip(pts[i], p0)] for i in idx[1:]]
    m = len(p0)
    w = []
    for j in range(m):
        minor = [r[:j] + r[j + 1 :] for r in rows]
        w.append((-1) ** j * int_det(minor))
    g = math.gcd(*w)
    w = [x // g for x in w]
    b = sum(a * c for a, c in zip(w, p0))
    # interior is given scaled by (m + 1)
    if sum(a * c for a, c in zip(w, interior)) > (m + 1) * b:
        w = [-x for x in w]
        b = -b
    return tuple(w), b


def _hull_nd(pts, m):
    """Beneath-beyond incremental hull in dimension ``m >= 3``."""
    simplex = [0]
    for i in range(1, len(pts)):
        rows = [[a - b for a, b in zip(pts[j], pts[0])] for j in simplex[1:] + [i]]
        if len(rref(rows)[1]) == len(rows):
            simplex.append(i)
            if len(simplex) == m + 1:
                break
    interior = [sum(pts[i][c] for i in simplex) for c in range(m)]

    facets: dict[tuple[int, ...], tuple[tuple[int, ...], int]] = {}
    for drop in simplex:
        idx = tuple(sorted(i for i in simplex if i != drop))
        facets[idx] = _facet_plane(pts, idx, interior)

    used = set(simplex)
    for i in range(len(pts)):
        if i in used:
            continue
        p = pts[i]
        visible = [f for f, (w, b) in facets.items() if sum(a * c for a, c in zip(w, p)) > b]
        if not visible:
            continue
        ridge_count: dict[tuple[int, ...], int] = {}
        for f in visible:
            for r in itertools.combinations(f, m - 1):
                ridge_count[r] = ridge_count.get(r, 0) + 1
        for f in visible:
            del facets[f]
        for r, cnt in ridge_count.items():
            if cnt == 1:
                idx = tuple(sorted(r + (i,)))
                facets[idx] = _facet_plane(pts, idx, interior)

    on_hull = sorted({i for f in facets for i in f})
    planes = {_normalize_int(w, b) for w, b in facets.values()}
    vert_idx = []
    for i in on_hull:
        tight = [list(map(Fraction, w)) for w, b in planes if sum(a * c for a, c in zip(w, pts[i])) == b]
        if len(rref(tight)[1]) == m:
            vert_idx.append(i)

    apex = vert_idx[0]
    vol = 0
    for f in sorted(facets):
        if apex in f:
            continue
        vol += abs(int_det([[a - b for a, b in zip(pts[j], pts[apex])] for j in f]))
    return vert_idx, sorted(planes), vol


def _normalize_int(w, b):
    g = math.gcd(*w)
    return tuple(x // g for x in w), b // g


def _normalize_halfspace(w, b: Fraction) -> Halfspace:
    g = math.gcd(*w)
    if g == 0:
        return tuple(Fraction(0) for _ in w), b
    return tuple(Fraction(x // g) for x in w), b / g


def _validate(ipts, verts, halfspaces, m):
    for p in ipts:
        for w, b in halfspaces:
            if sum(a * c for a, c in zip(w, p)) > b:
                raise InvariantViolation("hull H-representation excludes an input point")
    for v in verts:
        tight = sum(1 for w, b in halfspaces if sum(a * c for a, c in zip(w, v)) == b)
        if tight < m:
            raise InvariantViolation("hull vertex is tight on fewer than dim facets")
