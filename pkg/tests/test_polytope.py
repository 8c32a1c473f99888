import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from gradvol.errors import GradvolError, TrivialPieceError
from gradvol.lattice_series import complete_series, nonfg_series, series_from_generators
from gradvol.polytope import (
    convex_hull,
    from_vrep_text,
    lattice_points,
    mk_self_intersection,
    to_vrep_text,
    volume,
)

F = Fraction


def test_quadrilateral():
    P = convex_hull([(0, 0), (2, 0), (1, 1), (0, 1), (1, F(1, 2))])
    assert volume(P) == F(3, 2)
    assert set(P.vertices) == {(0, 0), (2, 0), (1, 1), (0, 1)}


def test_collinear_points_have_dimension_one():
    P = convex_hull([(0, 0), (1, 1), (3, 3)])
    assert P.dim == 1 and volume(P) == 0
    assert set(P.vertices) == {(0, 0), (3, 3)}
    assert P.contains((2, 2)) and not P.contains((2, 1))


def test_single_point():
    P = convex_hull([(F(1, 3), 2)])
    assert P.dim == 0 and P.vertices == ((F(1, 3), F(2)),)


def test_cube_with_center():
    pts = list(itertools.product([0, 1], repeat=3)) + [(F(1, 2),) * 3]
    P = convex_hull(pts)
    assert len(P.vertices) == 8 and volume(P) == 1 and len(P.halfspaces) == 6


def test_standard_simplex_volumes():
    for n in range(1, 5):
        pts = [tuple([0] * n)] + [tuple(int(i == j) for j in range(n)) for i in range(n)]
        assert volume(convex_hull(pts)) == F(1, math.factorial(n))


def test_empty_input_rejected():
    with pytest.raises(GradvolError):
        convex_hull([])


points2 = st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=3, max_size=25)
points3 = st.lists(st.tuples(*[st.integers(-4, 4)] * 3), min_size=4, max_size=25)


@given(points2)
def test_pick_theorem_oracle(pts):
    P = convex_hull(pts)
    assume(P.dim == 2)
    inside = lattice_points(P)
    boundary = sum(
        1 for p in inside if any(sum(a * b for a, b in zip(w, p)) == c for w, c in P.halfspaces)
    )
    interior = len(inside) - boundary
    assert volume(P) == interior + F(boundary, 2) - 1


@given(points3)
def test_volume_matches_qhull(pts):
    P = convex_hull(pts)
    assume(P.dim == 3)
    assert float(volume(P)) == pytest.approx(ConvexHull(np.array(pts, dtype=float)).volume, rel=1e-9)


@given(points3, st.permutations(range(3)))
def test_hull_invariant_under_coordinate_permutation(pts, perm):
    P = convex_hull(pts)
    Q = convex_hull([tuple(p[i] for i in perm) for p in pts])
    assert volume(P) == volume(Q) and len(P.vertices) == len(Q.vertices)


@given(points2)
def test_h_representation_contains_inputs_and_vertices_are_inputs(pts):
    P = convex_hull(pts)
    assert all(P.contains(p) for p in pts)
    assert set(P.vertices) <= {tuple(map(F, p)) for p in pts}


@given(points2, st.integers(1, 4))
def test_scaling_scales_volume(pts, s):
    P = convex_hull(pts)
    Q = convex_hull([(F(x, s), F(y, s)) for x, y in pts])
    assert volume(Q) == volume(P) / s**2


@given(points3)
def test_vrep_round_trip(pts):
    P = convex_hull(pts)
    Q = from_vrep_text(to_vrep_text(P))
    assert Q.vertices == P.vertices and volume(Q) == volume(P)


def test_vrep_text_format():
    assert to_vrep_text(convex_hull([(0,), (F(3, 2),)])) == "0/1\n3/2\n"


def test_lattice_points_of_triangle():
    P = convex_hull([(0, 0), (2, 0), (0, 2)])
    assert lattice_points(P) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]


def test_mk_self_intersection_examples():
    assert mk_self_intersection(nonfg_series(), 3) == (6, F(2, 3))
    even = series_from_generators(1, 2, [(1, (0,)), (1, (2,))])
    assert mk_self_intersection(even, 4) == (8, 2)
    assert mk_self_intersection(complete_series(2, 2), 5).normalized == 4


def test_mk_on_trivial_series_raises():
    with pytest.raises(TrivialPieceError):
        mk_self_intersection(series_from_generators(1, 1, []), 2)
