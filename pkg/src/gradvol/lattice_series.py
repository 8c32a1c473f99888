"""Monomial graded linear series on projective space.

A series of ``L = O(d)`` on ``P^n`` is stored by a rule producing the exponent
set ``A_k`` of its degree-``k`` piece in the affine chart ``x_0 = 1``: an
exponent ``alpha`` stands for the monomial ``x_0^(kd - |alpha|) x^alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from ._rational import smith_diagonal
from .errors import EnumerationCapError, SeriesError, TrivialPieceError

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class Complete:
    pass


@dataclass(frozen=True)
class GeneratorSpanned:
    generators: tuple[tuple[int, tuple[int, ...]], ...]


@dataclass(frozen=True)
class NewtonPolyhedron:
    generators: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class NonFinitelyGenerated:
    """``C[X, Y, YZ, YZ^2, ...]`` inside ``C[X, Y, Z]``; not finitely generated."""


@dataclass(frozen=True)
class Truncation:
    base: "MonomialSeries"
    ell: int


Rule = Union[Complete, GeneratorSpanned, NewtonPolyhedron, NonFinitelyGenerated, Truncation]


@dataclass(frozen=True)
class MonomialSeries:
    n: int
    d: int
    rule: Rule
    cap: int = DEFAULT_CAP
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @property
    def kind(self) -> str:
        return {
            Complete: "complete",
            GeneratorSpanned: "generators",
            NewtonPolyhedron: "ideal",
            NonFinitelyGenerated: "nonfg",
            Truncation: "truncation",
        }[type(self.rule)]

    @property
    def is_trivial(self) -> bool:
        """True for a generator series with no generators (``A_k`` empty for k >= 1)."""
        return isinstance(self.rule, GeneratorSpanned) and not self.rule.generators


@dataclass(frozen=True)
class GradedPiece:
    level: int
    degree: int
    points: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def exponents(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in row) for row in self.points]

    def __len__(self) -> int:
        return self.dim


@dataclass(frozen=True)
class VolumeEstimate:
    samples: tuple[tuple[int, Fraction], ...]
    extrapolated: float
    divisibility: int
    slope: float  # fitted coefficient c of v + c/k

    def sample_values(self) -> np.ndarray:
        return np.array([float(v) for _, v in self.samples])


# -- constructors ------------------------------------------------------------


def _check_nd(n: int, d: int) -> None:
    if int(n) < 1 or int(d) < 1:
        raise SeriesError(f"need n >= 1 and d >= 1, got n={n}, d={d}")


def _exponent(alpha, n: int) -> tuple[int, ...]:
    a = tuple(int(x) for x in alpha)
    if len(a) != n:
        raise SeriesError(f"exponent {a} does not have length {n}")
    if any(x < 0 for x in a):
        raise SeriesError(f"exponent {a} has a negative coordinate")
    return a


def complete_series(n: int, d: int, cap: int = DEFAULT_CAP) -> MonomialSeries:
    _check_nd(n, d)
    return MonomialSeries(int(n), int(d), Complete(), cap)


def series_from_generators(n: int, d: int, gens: Sequence, cap: int = DEFAULT_CAP) -> MonomialSeries:
    """Series generated by monomials ``(degree, exponent)``; empty list gives the trivial series."""
    _check_nd(n, d)
    out = []
    for deg, alpha in gens:
        deg = int(deg)
        a = _exponent(alpha, n)
        if deg < 1:
            raise SeriesError(f"generator degree must be positive, got {deg}")
        if sum(a) > deg * d:
            raise SeriesError(f"generator {a} violates |alpha| <= {deg}*{d}")
        out.append((deg, a))
    return MonomialSeries(int(n), int(d), GeneratorSpanned(tuple(sorted(set(out)))), cap)


def ideal_series(n: int, d: int, ideal_gens: Sequence, cap: int = DEFAULT_CAP) -> MonomialSeries:
    """``W_k = H^0(O(kd) * integral closure of a^k)`` for a monomial ideal ``a``.

    Integral closure of a monomial ideal is spanned by the lattice points of its
    Newton polyhedron, so ``A_k`` is the set of points of ``kd * simplex`` lying in
    ``k * (conv(gens) + R^n_{>=0})``.
    """
    _check_nd(n, d)
    if not ideal_gens:
        raise SeriesError("ideal_series needs at least one generator")
    gens = tuple(sorted({_exponent(g, n) for g in ideal_gens}))
    W = MonomialSeries(int(n), int(d), NewtonPolyhedron(gens), cap)
    if graded_piece(W, 1).dim == 0:
        raise SeriesError(f"degree d={d} too small: A_1 is empty for ideal {gens}")
    return W


def nonfg_series(cap: int = DEFAULT_CAP) -> MonomialSeries:
    """The non-finitely-generated algebra ``C[X, Y, YZ, YZ^2, ...]`` on ``P^2``, ``L = O(1)``.

    Exponents are ``(b, c)`` for ``X^a Y^b Z^c``; membership is ``b >= 1 or c == 0``.
    """
    return MonomialSeries(2, 1, NonFinitelyGenerated(), cap)


def nonfg_generators(max_degree: int) -> list[tuple[int, tuple[int, int]]]:
    """Generators ``X, Y, YZ, ..., YZ^(max_degree-1)`` as ``(degree, (b, c))``."""
    gens = [(1, (0, 0)), (1, (1, 0))]
    gens += [(i + 1, (1, i)) for i in range(1, max_degree)]
    return gens


def truncate(W: MonomialSeries, ell: int) -> MonomialSeries:
    """Subseries generated in degree ``ell``: ``A'_k`` is the ``k/ell``-fold sumset of ``A_ell``."""
    ell = int(ell)
    if ell < 1:
        raise SeriesError(f"truncation level must be >= 1, got {ell}")
    return MonomialSeries(W.n, W.d, Truncation(W, ell), W.cap)


# -- enumeration -------------------------------------------------------------


def _simplex_points(n: int, m: int, cap: int) -> np.ndarray:
    """Lattice points of ``m * standard simplex`` in lexicographic order."""
    count = math.comb(m + n, n)
    if count > cap:
        raise EnumerationCapError(f"{count} points in {m}*simplex exceed cap {cap}")
    if n == 1:
        return np.arange(m + 1, dtype=np.int64)[:, None]
    blocks = []
    for a in range(m + 1):
        rest = _simplex_points(n - 1, m - a, cap)
        blocks.append(np.column_stack([np.full(len(rest), a, dtype=np.int64), rest]))
    return np.vstack(blocks)


def _empty(n: int) -> np.ndarray:
    return np.zeros((0, n), dtype=np.int64)


def _encode(points: np.ndarray, base: int) -> np.ndarray:
    key = np.zeros(len(points), dtype=np.int64)
    for j in range(points.shape[1]):
        key = key * base + points[:, j]
    return key


def _decode(keys: np.ndarray, base: int, n: int) -> np.ndarray:
    out = np.empty((len(keys), n), dtype=np.int64)
    k = keys.copy()
    for j in range(n - 1, -1, -1):
        k, out[:, j] = np.divmod(k, base)
    return out


def _sumset(S: np.ndarray, A: np.ndarray, max_coord: int, cap: int) -> np.ndarray:
    """Canonically sorted ``{s + a}``; coordinates of every sum are at most ``max_coord``."""
    n = S.shape[1]
    if len(S) == 0 or len(A) == 0:
        return _empty(n)
    base = max_coord + 1
    if n * math.log2(base) > 62:
        raise EnumerationCapError("sumset keys would overflow 64-bit integers")
    ks, ka = _encode(S, base), _encode(A, base)
    chunk = max(1, 4_000_000 // len(ka))
    parts = [np.unique((ks[i : i + chunk, None] + ka[None, :]).ravel()) for i in range(0, len(ks), chunk)]
    keys = np.unique(np.concatenate(parts))
    if len(keys) > cap:
        raise EnumerationCapError(f"{len(keys)} points exceed cap {cap}")
    return _decode(keys, base, n)


def _newton_inequalities(gens) -> list[tuple[np.ndarray, Fraction]]:
    """Facets ``w . x >= b`` (``w >= 0``) of ``conv(gens) + R^n_{>=0}``."""
    from .polytope import convex_hull

    n = len(gens[0])
    pts = list(gens)
    for g in gens:
        for i in range(n):
            pts.append(tuple(g[j] + (j == i) for j in range(n)))
    P = convex_hull(pts)
    ineqs = []
    for w, c in P.halfspaces:
        # stored as w . x <= c; keep facets whose inner normal -w is nonnegative
        inner = [-x for x in w]
        if all(x >= 0 for x in inner) and any(x > 0 for x in inner):
            ineqs.append((np.array([int(x) for x in inner], dtype=np.int64), -c))
    return ineqs


def _level_points(W: MonomialSeries, k: int) -> np.ndarray:
    cache = W._cache
    if ("A", k) in cache:
        return cache[("A", k)]
    n, d, rule = W.n, W.d, W.rule
    if isinstance(rule, (GeneratorSpanned, Truncation)):
        # fill lower levels bottom-up so recursion depth stays bounded
        step = rule.ell if isinstance(rule, Truncation) else 1
        for j in range(step, k, step):
            if ("A", j) not in cache:
                _level_points(W, j)
    if k == 0:
        pts = np.zeros((1, n), dtype=np.int64)
    elif isinstance(rule, Complete):
        pts = _simplex_points(n, k * d, W.cap)
    elif isinstance(rule, NonFinitelyGenerated):
        S = _simplex_points(2, k, W.cap)
        pts = S[(S[:, 0] >= 1) | (S[:, 1] == 0)]
    elif isinstance(rule, NewtonPolyhedron):
        if "newton" not in cache:
            cache["newton"] = _newton_inequalities(rule.generators)
        S = _simplex_points(n, k * d, W.cap)
        keep = np.ones(len(S), dtype=bool)
        for w, b in cache["newton"]:
            keep &= (S @ w) * b.denominator >= k * b.numerator
        pts = S[keep]
    elif isinstance(rule, GeneratorSpanned):
        parts = [
            _level_points(W, k - deg) + np.array(alpha, dtype=np.int64)
            for deg, alpha in rule.generators
            if deg <= k
        ]
        parts = [p for p in parts if len(p)]
        if parts:
            pts = np.unique(np.vstack(parts), axis=0)
            if len(pts) > W.cap:
                raise EnumerationCapError(f"{len(pts)} points exceed cap {W.cap}")
        else:
            pts = _empty(n)
    elif isinstance(rule, Truncation):
        ell = rule.ell
        if k % ell:
            pts = _empty(n)
        else:
            A = _level_points(rule.base, ell)
            pts = _sumset(_level_points(W, k - ell), A, k * d, W.cap)
    else:  # pragma: no cover
        raise SeriesError(f"unknown rule {rule!r}")
    pts.setflags(write=False)
    cache[("A", k)] = pts
    return pts


def graded_piece(W: MonomialSeries, k: int) -> GradedPiece:
    """Exponent set ``A_k`` of ``W_k`` in lexicographic order."""
    k = int(k)
    if k < 1:
        raise SeriesError(f"level must be >= 1, got {k}")
    return GradedPiece(k, W.d, _level_points(W, k))


def dim_piece(W: MonomialSeries, k: int) -> int:
    return graded_piece(W, k).dim


# -- invariants --------------------------------------------------------------


def is_birational_at(W: MonomialSeries, k: int) -> tuple[bool, float]:
    """Whether exponent differences of ``A_k`` generate ``Z^n``, and their lattice index.

    The index is ``math.inf`` when the differences have rank below ``n``.
    """
    pts = graded_piece(W, k).points
    if len(pts) == 0:
        raise TrivialPieceError(f"series trivial at level {k}")
    diffs = (pts[1:] - pts[0]).tolist()
    divisors = smith_diagonal(diffs) if diffs else []
    if len(divisors) < W.n:
        return False, math.inf
    index = math.prod(divisors)
    return index == 1, index


def estimate_volume(W: MonomialSeries, k_max: int, divisibility: int = 1) -> VolumeEstimate:
    """Samples of ``n! dim W_k / k^n`` and a least-squares fit ``v + c/k``.

    The fit uses the largest half of the sampled levels.
    """
    k_max, divisibility = int(k_max), int(divisibility)
    if not (k_max >= divisibility >= 1):
        raise SeriesError(f"need k_max >= divisibility >= 1, got {k_max}, {divisibility}")
    nfact = math.factorial(W.n)
    samples = tuple(
        (k, Fraction(nfact * dim_piece(W, k), k**W.n)) for k in range(divisibility, k_max + 1, divisibility)
    )
    tail = samples[len(samples) // 2 :]
    if len(tail) == 1:
        v, c = float(tail[0][1]), 0.0
    else:
        ks = np.array([k for k, _ in tail], dtype=float)
        ys = np.array([float(y) for _, y in tail])
        (v, c), *_ = np.linalg.lstsq(np.column_stack([np.ones_like(ks), 1.0 / ks]), ys, rcond=None)
    return VolumeEstimate(samples, max(float(v), 0.0), divisibility, float(c))


def fujita_chain(W: MonomialSeries, ells: Sequence[int], k_max: int) -> list[tuple[int, VolumeEstimate]]:
    """Volume estimates of ``truncate(W, ell)`` sampled on the common grid ``lcm(ells) * j``."""
    step = math.lcm(*ells)
    return [(ell, estimate_volume(truncate(W, ell), k_max, step)) for ell in ells]
