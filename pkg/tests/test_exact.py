import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradvol import _lp
from gradvol._rational import (
    det,
    format_fraction,
    int_det,
    nullspace,
    parse_fraction,
    rank,
    rref,
    smith_diagonal,
)

small = st.integers(-4, 4)


def matrices(rows, cols):
    return st.lists(st.lists(small, min_size=cols, max_size=cols), min_size=rows, max_size=rows)


def test_format_and_parse_fraction():
    assert format_fraction(Fraction(3)) == "3/1"
    assert format_fraction(Fraction(-2, 6)) == "-1/3"
    assert parse_fraction("7/2") == Fraction(7, 2)
    assert parse_fraction("5") == Fraction(5)


@given(st.fractions(max_denominator=1000))
def test_fraction_text_round_trip(x):
    assert parse_fraction(format_fraction(x)) == x


def test_rref_pivots():
    rows, piv = rref([[2, 4, 2], [1, 2, 3]])
    assert piv == [0, 2]
    assert rows[0][0] == 1 and rows[1][2] == 1


@given(matrices(3, 3))
def test_int_det_matches_fraction_det_and_numpy(m):
    assert int_det(m) == det(m)
    assert int_det(m) == round(np.linalg.det(np.array(m, dtype=float)))


@given(matrices(3, 4))
def test_nullspace_vectors_are_annihilated(m):
    basis = nullspace(m, 4)
    assert len(basis) == 4 - rank(m)
    for v in basis:
        assert all(sum(Fraction(a) * b for a, b in zip(row, v)) == 0 for row in m)


def test_smith_diagonal_known():
    assert smith_diagonal([[2, 0], [0, 3]]) == [1, 6]
    assert smith_diagonal([[2], [4], [6]]) == [2]
    assert smith_diagonal([[0, 0]]) == []


@given(matrices(4, 2))
def test_smith_diagonal_against_sympy(m):
    sympy = pytest.importorskip("sympy")
    from sympy.matrices.normalforms import smith_normal_form

    snf = smith_normal_form(sympy.Matrix(m), domain=sympy.ZZ)
    expected = [abs(int(snf[i, i])) for i in range(min(snf.shape)) if snf[i, i] != 0]
    assert smith_diagonal(m) == expected


@given(matrices(2, 2))
def test_smith_product_is_gcd_of_maximal_minors(m):
    divisors = smith_diagonal(m)
    if rank(m) == 2:
        assert math.prod(divisors) == abs(int_det(m))


def test_lp_small_cases():
    assert _lp.feasible([[1], [-1]], [1, 0])
    assert not _lp.feasible([[1], [-1]], [1, -2])
    assert _lp.feasible([], [])
    # x + y <= -1, x >= 0, y >= 0 is empty
    assert not _lp.feasible([[1, 1], [-1, 0], [0, -1]], [-1, 0, 0])


@given(st.integers(1, 4), st.data())
def test_fourier_motzkin_agrees_with_simplex(n, data):
    m = data.draw(st.integers(1, 7))
    A = data.draw(matrices(m, n))
    b = data.draw(st.lists(small, min_size=m, max_size=m))
    rows = [(tuple(map(Fraction, a)), Fraction(c)) for a, c in zip(A, b)]
    assert _lp._fourier_motzkin(rows, n) == _lp._simplex_feasible(rows, n)


@given(st.integers(1, 3), st.data())
def test_lp_feasible_when_a_point_satisfies_it(n, data):
    x = data.draw(st.lists(small, min_size=n, max_size=n))
    m = data.draw(st.integers(1, 6))
    A = data.draw(matrices(m, n))
    slack = data.draw(st.lists(st.integers(0, 3), min_size=m, max_size=m))
    b = [sum(a * xi for a, xi in zip(row, x)) + s for row, s in zip(A, slack)]
    assert _lp.feasible(A, b)
    assert _lp._simplex_feasible([(tuple(map(Fraction, a)), Fraction(c)) for a, c in zip(A, b)], n)
