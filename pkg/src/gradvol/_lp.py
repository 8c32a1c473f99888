"""Exact rational feasibility of ``A x <= b`` with free variables."""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

# switch from elimination to simplex once the system grows past this size
FM_CONSTRAINT_LIMIT = 20000


def feasible(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> bool:
    """Whether ``{x : A x <= b}`` is nonempty, decided in exact arithmetic.

    Fourier-Motzkin elimination for up to three variables, a Phase-I simplex
    with Bland's rule otherwise (or when elimination blows up).
    """
    rows = [(tuple(map(Fraction, a)), Fraction(c)) for a, c in zip(A, b)]
    if not rows:
        return True
    n = len(rows[0][0])
    if n <= 3:
        result = _fourier_motzkin(rows, n)
        if result is not None:
            return result
    return _simplex_feasible(rows, n)


def _normalize(a, c):
    scale = next((abs(x) for x in a if x != 0), None)
    if scale is None:
        return a, c
    return tuple(x / scale for x in a), c / scale


def _fourier_motzkin(rows, n):
    current = {_normalize(a, c) for a, c in rows}
    for j in range(n):
        pos, neg, rest = [], [], []
        for a, c in current:
            (pos if a[j] > 0 else neg if a[j] < 0 else rest).append((a, c))
        if len(pos) * len(neg) + len(rest) > FM_CONSTRAINT_LIMIT:
            return None
        nxt = set(rest)
        for ap, cp in pos:
            for an, cn in neg:
                lp, ln = -an[j], ap[j]
                a = tuple(lp * x + ln * y for x, y in zip(ap, an))
                nxt.add(_normalize(a, lp * cp + ln * cn))
        # tighten duplicates that share a normal
        tight: dict = {}
        for a, c in nxt:
            if a not in tight or c < tight[a]:
                tight[a] = c
        current = set(tight.items())
    return all(c >= 0 for _, c in current)


def _simplex_feasible(rows, n):
    # x = u - v with u, v >= 0; one slack per row; artificials on rows with b < 0
    m = len(rows)
    ncols = 2 * n + m
    tableau = []
    basis = []
    art = []
    for i, (a, c) in enumerate(rows):
        row = list(a) + [-x for x in a] + [Fraction(int(i == r)) for r in range(m)]
        if c < 0:
            row = [-x for x in row]
            c = -c
            art.append(i)
        tableau.append(row + [c])
    # append artificial columns
    for idx, i in enumerate(art):
        for r, row in enumerate(tableau):
            row.insert(-1, Fraction(int(r == i)))
    total = ncols + len(art)
    for i in range(m):
        basis.append(ncols + art.index(i) if i in art else 2 * n + i)
    if not art:
        return True
    # objective: minimize sum of artificials -> reduced costs
    obj = [Fraction(0)] * (total + 1)
    for i in art:
        obj = [o - x for o, x in zip(obj, tableau[i])]
    for j in range(ncols, total):
        obj[j] = Fraction(0)
    while True:
        enter = next((j for j in range(total) if obj[j] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i, row in enumerate(tableau):
            if row[enter] > 0:
                ratio = row[-1] / row[enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:  # pragma: no cover - phase I is bounded below by 0
            break
        piv = tableau[leave][enter]
        tableau[leave] = [x / piv for x in tableau[leave]]
        for i in range(m):
            if i != leave and tableau[i][enter] != 0:
                f = tableau[i][enter]
                tableau[i] = [x - f * y for x, y in zip(tableau[i], tableau[leave])]
        if obj[enter] != 0:
            f = obj[enter]
            obj = [x - f * y for x, y in zip(obj, tableau[leave])]
        basis[leave] = enter
    return obj[-1] == 0
