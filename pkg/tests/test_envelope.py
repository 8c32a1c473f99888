import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradvol.envelope import (
    GridField,
    GridSpec,
    PLConvexFunction,
    check_schedule,
    doubling_schedule,
    envelope_level,
    equilibrium_symbol,
    evaluate_on_grid,
    fubini_study_weight,
    legendre,
)
from gradvol.errors import GradvolError, TrivialPieceError
from gradvol.lattice_series import (
    complete_series,
    nonfg_series,
    graded_piece,
    ideal_series,
    series_from_generators,
)

F = Fraction
EVEN = series_from_generators(1, 2, [(1, (0,)), (1, (2,))])


def fs_conjugate(s, d):
    """Closed form of the Fubini-Study conjugate on d * simplex."""
    s = [float(x) for x in s]
    r = d - sum(s)
    xlogx = lambda x: x * math.log(x) if x > 0 else 0.0
    return sum(xlogx(x) for x in s) + xlogx(r) - d * math.log(d)


def test_fubini_study_examples():
    phi = fubini_study_weight(1, 1)
    assert phi(np.array([0.0])) == pytest.approx(math.log(2))
    assert phi.gradient(np.array([0.0]))[0] == pytest.approx(0.5)
    phi3 = fubini_study_weight(2, 3)
    T = np.random.default_rng(0).uniform(-30, 30, size=(1000, 2))
    g = phi3.gradient(T)
    assert np.all(g > 0) and np.all(g.sum(axis=1) < 3)


@pytest.mark.parametrize("n", [1, 2])
def test_fubini_study_density_has_mass_one_over_n_factorial(n):
    phi = fubini_study_weight(n, 1)
    axis = np.linspace(-40, 40, 4001 if n == 1 else 801)
    h = axis[1] - axis[0]
    T = np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1)
    total = float(np.sum(phi.volume_density(T))) * h**n
    assert total == pytest.approx(1 / math.factorial(n), rel=1e-4)


def test_legendre_examples():
    phi = fubini_study_weight(1, 1)
    assert legendre(phi, (F(0),)) == pytest.approx(0, abs=1e-12)
    assert legendre(phi, (F(1, 2),)) == pytest.approx(-0.6931471805599453, abs=1e-9)
    assert legendre(phi, (F(2),)) == math.inf
    assert legendre(phi, (F(-1, 3),)) == math.inf


@given(st.integers(1, 3), st.fractions(min_value=0, max_value=1, max_denominator=40))
def test_legendre_matches_closed_form_1d(d, u):
    s = (u * d,)
    assert legendre(fubini_study_weight(1, d), s) == pytest.approx(fs_conjugate(s, d), abs=1e-8)


@given(st.fractions(min_value=0, max_value=1, max_denominator=12), st.fractions(min_value=0, max_value=1, max_denominator=12))
def test_legendre_matches_closed_form_2d(a, b):
    if a + b > 1:
        a, b = 1 - a, 1 - b
    s = (2 * a, 2 * b)
    assert legendre(fubini_study_weight(2, 2), s) == pytest.approx(fs_conjugate(s, 2), abs=1e-8)


def test_legendre_fenchel_young_and_equality_at_argmax():
    phi = fubini_study_weight(2, 1)
    rng = np.random.default_rng(1)
    for _ in range(20):
        t = rng.uniform(-5, 5, size=2)
        s = phi.gradient(t)
        s_frac = tuple(F(float(x)).limit_denominator(10**6) for x in s)
        conj = legendre(phi, s_frac)
        s_used = np.array([float(x) for x in s_frac])
        pts = rng.uniform(-10, 10, size=(200, 2))
        assert np.all(phi(pts) >= pts @ s_used - conj - 1e-9)
        assert float(phi(t)) == pytest.approx(float(t @ s_used) - conj, abs=1e-5)


def test_envelope_level_examples():
    W, phi = complete_series(1, 1), fubini_study_weight(1, 1)
    f1 = envelope_level(W, 1, phi)
    assert f1.slopes == ((0,), (1,))
    assert f1.intercepts == pytest.approx((0, 0), abs=1e-12)
    t = np.linspace(-5, 5, 11)[:, None]
    assert f1(t) == pytest.approx(np.maximum(0, t[:, 0]), abs=1e-12)
    f2 = envelope_level(W, 2, phi)
    assert (F(1, 2),) in f2.slopes
    assert f2(np.array([[0.0]]))[0] >= f1(np.array([[0.0]]))[0]
    single = series_from_generators(1, 1, [(1, (0,))])
    assert envelope_level(single, 3, phi)(t) == pytest.approx(np.zeros(11), abs=1e-12)


def test_envelope_level_on_trivial_piece():
    with pytest.raises(TrivialPieceError):
        envelope_level(series_from_generators(1, 1, []), 1, fubini_study_weight(1, 1))


CASES = [
    (complete_series(1, 2), fubini_study_weight(1, 2)),
    (EVEN, fubini_study_weight(1, 2)),
    (nonfg_series(), fubini_study_weight(2, 1)),
    (ideal_series(2, 2, [(1, 0), (0, 2)]), fubini_study_weight(2, 2)),
]


@pytest.mark.parametrize("W,phi", CASES, ids=lambda x: getattr(x, "kind", ""))
def test_divisibility_monotonicity_and_domination(W, phi):
    grid = GridSpec.cube(W.n, 6.0, 201 if W.n == 1 else 31)
    pts = grid.points()
    for k in (1, 2):
        fk = envelope_level(W, k, phi)(pts)
        assert np.all(fk <= phi(pts) + 1e-9)
        for m in (2, 3):
            assert np.all(fk <= envelope_level(W, m * k, phi)(pts) + 1e-9)


def _normalized_section_oracle(alpha, k, phi, t):
    """(1/k)(<alpha,t> - log sup_t' exp(<alpha,t'> - k phi(t'))) with the sup on a dense grid."""
    axis = np.linspace(-60, 60, 240001)[:, None]
    sup = np.max(axis @ np.array(alpha, dtype=float) - k * phi(axis))
    return (np.dot(alpha, t) - sup) / k


def test_even_series_equilibrium_against_dense_oracle():
    phi = fubini_study_weight(1, 2)
    eq = equilibrium_symbol(EVEN, phi, [1, 2, 4])
    # every slope is (even exponent) / k for some k in the schedule
    assert all(0 <= s[0] <= 2 and (4 * s[0]).denominator == 1 and int(4 * s[0]) % 2 == 0 for s in eq.symbol.slopes)
    for t in (-3.0, 0.0, 1.5):
        oracle = max(
            _normalized_section_oracle(a, k, phi, np.array([t]))
            for k in (1, 2, 4)
            for a in graded_piece(EVEN, k).exponents
        )
        assert eq.symbol(np.array([[t]]))[0] == pytest.approx(oracle, abs=1e-7)
    # value at the origin: the slope-1 piece from level 2 reaches phi(0) = 2 log 2
    assert eq.symbol(np.array([[0.0]]))[0] == pytest.approx(2 * math.log(2), abs=1e-9)


def test_equilibrium_is_pointwise_max_of_levels():
    W, phi = complete_series(1, 1), fubini_study_weight(1, 1)
    eq = equilibrium_symbol(W, phi, [1, 2, 4])
    t = np.linspace(-5, 5, 101)[:, None]
    expected = np.max([eq.levels[k](t) for k in (1, 2, 4)], axis=0)
    assert eq.symbol(t) == pytest.approx(expected, abs=1e-12)
    # schedule {1} is max(0, t); the longer schedule lifts it by log 2 at the origin
    ref = np.linspace(-5, 5, 1001)[:, None]
    assert eq.gap == pytest.approx(float(np.max(np.abs(eq.levels[4](ref) - eq.levels[2](ref)))), abs=1e-12)
    single = equilibrium_symbol(W, phi, [1])
    assert single.gap == 0
    assert float(np.max(eq.symbol(t) - single.symbol(t))) == pytest.approx(math.log(2), abs=1e-9)


def test_constant_section_series_has_zero_symbol():
    W = series_from_generators(2, 1, [(1, (0, 0))])
    eq = equilibrium_symbol(W, fubini_study_weight(2, 1), [1, 2, 4])
    assert eq.symbol.slopes == ((0, 0),)
    assert eq.symbol(np.zeros((3, 2))) == pytest.approx(np.zeros(3), abs=1e-12)


def test_schedule_validation():
    assert check_schedule([1, 2, 6]) == (1, 2, 6)
    for bad in ([], [3, 5], [2, 2], [0, 1]):
        with pytest.raises(GradvolError):
            check_schedule(bad)
    assert doubling_schedule(nonfg_series(), 3) == (1, 2, 4)


@given(st.lists(st.tuples(st.fractions(-3, 3, max_denominator=5), st.floats(-5, 5)), min_size=1, max_size=8))
def test_pl_text_round_trip(pieces):
    f = PLConvexFunction.from_pieces([((s,), c) for s, c in pieces])
    g = PLConvexFunction.from_text(f.to_text())
    assert g == f


def test_pl_text_format():
    f = PLConvexFunction.from_pieces([((F(1, 2), 0), 0.25)])
    assert f.to_text() == "1/2 0/1 0.25\n"


def test_evaluate_on_grid_examples():
    relu = PLConvexFunction.from_pieces([((0,), 0), ((1,), 0)])
    field = evaluate_on_grid(relu, GridSpec(((-1.0, 1.0),), (5,)))
    assert field.values.tolist() == [0, 0, 0, 0.5, 1]
    fs = evaluate_on_grid(fubini_study_weight(1, 1), GridSpec(((-1.0, 1.0),), (3,)))
    assert fs.values[1] == pytest.approx(math.log(2))
    zero = evaluate_on_grid(PLConvexFunction.from_pieces([((0, 0), 0)]), GridSpec.cube(2, 3.0, 4))
    assert np.all(zero.values == 0)


def test_grid_field_csv():
    relu = PLConvexFunction.from_pieces([((0,), 0), ((1,), 0)])
    text = evaluate_on_grid(relu, GridSpec(((-1.0, 1.0),), (3,))).to_csv()
    assert text.splitlines() == ["# box=-1.0:1.0", "# resolution=3", "t1,value", "-1.0,0.0", "0.0,0.0", "1.0,1.0"]


def test_grid_guards():
    with pytest.raises(GradvolError):
        GridSpec(((1.0, 0.0),), (3,))
    with pytest.raises(GradvolError):
        GridSpec.cube(2, 1.0, 10**5)
