import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradvol.envelope import GridSpec, PLConvexFunction, equilibrium_symbol, envelope_level, fubini_study_weight
from gradvol.errors import HypothesisNotMet, MassError
from gradvol.lattice_series import complete_series, nonfg_series, series_from_generators
from gradvol.monge_ampere import (
    MassReport,
    active_slopes,
    analytic_mass_limit,
    comparison_check,
    generate_comparison_pairs,
    ma_mass_grid,
    ma_mass_pl,
    mass_report,
    monotone_convergence_harness,
)
from gradvol.polytope import mk_self_intersection

F = Fraction
PL = PLConvexFunction.from_pieces
RELU = PL([((0,), 0), ((1,), 0)])


def brute_active_1d(f, lo=-200, hi=200, num=400001):
    t = np.linspace(lo, hi, num)[:, None]
    idx = np.argmax(f.affine_values(t), axis=1)
    return {f.slopes[i] for i in np.unique(idx)}


def test_active_slope_examples():
    assert active_slopes(RELU) == {(0,), (1,)}
    dominated = PL([((0,), 0), ((1,), 0), ((1,), -5)])
    assert active_slopes(dominated) == {(0,), (1,)}
    lifted = PL([((0,), 0), ((2,), 0), ((1,), 10)])
    assert active_slopes(lifted) == {(0,), (1,), (2,)}
    sunk = PL([((0,), 0), ((2,), 0), ((1,), -1)])
    assert active_slopes(sunk) == {(0,), (2,)}


def test_active_slope_on_a_zero_width_cell():
    # slope 1 touches the max only at t = 0
    f = PL([((0,), 0), ((2,), 0), ((1,), 0)])
    assert (F(1),) in active_slopes(f)
    g = PL([((0,), 0), ((2,), 0), ((1,), -1e-12)])
    assert (F(1),) not in active_slopes(g)


@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-6, 6)), min_size=1, max_size=8))
def test_active_slopes_match_dense_sampling_1d(raw):
    f = PL([((s,), float(c)) for s, c in raw])
    # integer data: cells are intervals with endpoints in (1/8) Z, so a fine grid sees every nondegenerate cell
    sampled = brute_active_1d(f, -50, 50, 800001)
    exact = active_slopes(f)
    assert sampled <= exact
    for s in exact - sampled:
        # only degenerate (single point) cells may escape sampling
        i = max((j for j in range(len(f.slopes)) if f.slopes[j] == s), key=lambda j: f.intercepts[j])
        others = [j for j in range(len(f.slopes)) if f.slopes[j] != s]
        t_cands = [
            (f.intercepts[j] - f.intercepts[i]) / float(s[0] - f.slopes[j][0])
            for j in others
            if f.slopes[j][0] != s[0]
        ]
        assert any(abs(float(f(np.array([[t]]))[0]) - (float(s[0]) * t + f.intercepts[i])) < 1e-9 for t in t_cands)


def test_ma_mass_pl_examples():
    assert ma_mass_pl(RELU) == 1
    assert ma_mass_pl(PL([((-1,), 0), ((1,), 0)])) == 2
    eq = equilibrium_symbol(complete_series(2, 1), fubini_study_weight(2, 1), [1])
    assert ma_mass_pl(eq.symbol) == 1
    flat = PL([((0, 0), 0), ((1, 1), 0)])
    assert ma_mass_pl(flat) == 0


@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.floats(-3, 3)), min_size=1, max_size=7))
def test_mass_ignores_intercepts(raw):
    f = PL([((a, b), c) for a, b, c in raw])
    g = PL([((a, b), 0.0) for a, b, _ in raw])
    assert ma_mass_pl(f) == ma_mass_pl(g)


def test_grid_mass_examples():
    assert ma_mass_grid(fubini_study_weight(1, 1)).mass == pytest.approx(1, abs=0.01)
    assert ma_mass_grid(fubini_study_weight(2, 1)).mass == pytest.approx(1, abs=0.05)
    assert ma_mass_grid(RELU, eps=0.05).mass == pytest.approx(1, abs=0.01)


@pytest.mark.parametrize(
    "f",
    [
        PL([((0, 0), 0), ((1, 0), 0), ((0, 1), 0)]),
        PL([((0, 0), 0), ((2, 0), -1), ((0, 1), 0.5), ((1, 1), -0.3)]),
        PL([((-1, 0), 0), ((1, 0), 0), ((0, -1), 0), ((0, 1), 0)]),
        PL([((0,), 0), ((F(1, 2),), 0.4), ((3,), -2)]),
    ],
)
def test_grid_mass_matches_exact_mass(f):
    exact = float(ma_mass_pl(f))
    assert ma_mass_grid(f).mass == pytest.approx(exact, rel=0.03)


def test_grid_mass_thread_count_invariance():
    sym = equilibrium_symbol(complete_series(2, 1), fubini_study_weight(2, 1), [1, 2]).symbol
    masses = {ma_mass_grid(sym, workers=w).mass for w in (1, 2, 5)}
    assert len(masses) == 1


def test_grid_mass_box_too_small():
    with pytest.raises(MassError, match="box too small"):
        ma_mass_grid(fubini_study_weight(1, 1), GridSpec.cube(1, 2.0, 401))


def test_grid_mass_smoothing_too_small_for_3x3_stencil():
    # in three dimensions the generic stencil is used; a tiny eps leaves negative determinants
    f = PL([((0, 0, 0), 0), ((1, 0, 0), 0), ((0, 1, 0), 0), ((0, 0, 1), 0)])
    with pytest.raises(MassError, match="eps too small"):
        ma_mass_grid(f, GridSpec.cube(3, 12.0, 48), eps=0.05)


def test_non_convex_symbol_rejected():
    class Bumpy:
        n, d = 1, 1

        def __call__(self, t):
            return fubini_study_weight(1, 1)(t) + 0.5 * np.exp(-np.sum(t**2, axis=-1))

        def slope_vertices(self):
            return np.array([[0.0], [1.0]])

    with pytest.raises(MassError, match="not convex"):
        ma_mass_grid(Bumpy())


def test_mass_report_json():
    rep = mass_report(PL([((0,), 0), ((3,), 0)]), with_grid=False)
    d = json.loads(rep.to_json())
    assert d["exact_mass"] == "3/1" and d["grid_mass"] is None and d["discrepancy"] is None
    full = mass_report(RELU)
    assert full.discrepancy == pytest.approx(abs(1 - full.grid_mass))


@pytest.mark.parametrize("n", [1, 2])
def test_comparison_check_on_generated_pairs(n):
    for f, g, C in generate_comparison_pairs(n, 15, seed=100 + n):
        assert comparison_check(f, g, C)


def test_comparison_check_rejects_violated_hypothesis():
    with pytest.raises(HypothesisNotMet):
        comparison_check(RELU, PL([((0,), 1.0), ((1,), 0.0)]), 0.5)
    # slope outside the hull of f: g - f is unbounded, which no grid can see on a small box
    with pytest.raises(HypothesisNotMet):
        comparison_check(RELU, PL([((F(3, 2),), -40.0)]), 0.0)


def test_harness_regimes():
    a = monotone_convergence_harness("decreasing", RELU, [0.4, 0.2, 0.1, 0.05])
    assert a.converged and a.rate > 0
    assert all(x <= y + 1e-12 for x, y in zip(a.subbox_masses, a.subbox_masses[1:]))
    full = equilibrium_symbol(complete_series(1, 2), fubini_study_weight(1, 2), [1, 2]).symbol
    b = monotone_convergence_harness("increasing", full, [1, 2, 3, len(full.slopes)])
    assert b.converged and b.masses[-1] == 2
    c = monotone_convergence_harness("uniform", fubini_study_weight(1, 2), [0.05, 0.02, 0.01])
    assert c.converged and all(e < 0.01 for e in c.errors)
    with pytest.raises(ValueError):
        monotone_convergence_harness("sideways", RELU, [1])


@pytest.mark.parametrize(
    "W,phi,sched",
    [
        (complete_series(1, 2), fubini_study_weight(1, 2), [1, 2, 4]),
        (nonfg_series(), fubini_study_weight(2, 1), [1, 2, 4, 8]),
        (series_from_generators(1, 2, [(1, (0,)), (1, (2,))]), fubini_study_weight(1, 2), [1, 3]),
    ],
)
def test_envelope_mass_equals_normalized_mk(W, phi, sched):
    limit = analytic_mass_limit(W, phi, sched)
    for k, m in limit.levels:
        assert m == mk_self_intersection(W, k).normalized
        assert ma_mass_pl(envelope_level(W, k, phi)) == m
