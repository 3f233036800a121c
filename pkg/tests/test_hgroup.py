import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenberg_fujita.hgroup import (GroupPoint, ball_volume, compose, dilate, distance, geometry,
                                      hnorm, hnorm_rt, homogeneous_dimension, integrate_ball,
                                      integrate_radial, inverse, unit_ball_volume)
from oracles import ball_mass_monte_carlo, unit_ball_volume_by_counting

coord = st.floats(-5, 5, allow_nan=False)
points = st.builds(lambda a, b, c: GroupPoint([a], [b], c), coord, coord, coord)
scales = st.floats(0.05, 20, allow_nan=False)


def close(a: GroupPoint, b: GroupPoint, tol=1e-10):
    return np.allclose(a.as_array(), b.as_array(), rtol=tol, atol=tol)


@given(points, points, points)
def test_composition_is_associative(a, b, c):
    assert close(compose(compose(a, b), c), compose(a, compose(b, c)))


@given(points)
def test_identity_and_inverse(a):
    e = GroupPoint.identity(1)
    assert close(compose(a, e), a) and close(compose(e, a), a)
    assert close(compose(a, inverse(a)), e) and close(compose(inverse(a), a), e)


@given(points, points, points)
def test_distance_is_left_invariant(a, b, g):
    assert distance(compose(g, a), compose(g, b)) == pytest.approx(distance(a, b), rel=1e-9, abs=1e-9)


@given(points, scales)
def test_norm_is_homogeneous(a, lam):
    assert hnorm(dilate(lam, a)) == pytest.approx(lam * hnorm(a), rel=1e-10, abs=1e-12)


@given(points, points, scales)
def test_dilation_is_an_automorphism(a, b, lam):
    assert close(dilate(lam, compose(a, b)), compose(dilate(lam, a), dilate(lam, b)), 1e-9)


@given(points)
def test_norm_is_inversion_invariant(a):
    assert hnorm(inverse(a)) == pytest.approx(hnorm(a), rel=1e-12)


def test_group_law_values():
    a = GroupPoint([1.0], [0.0], 0.0)
    b = GroupPoint([0.0], [1.0], 0.0)
    # tau picks up 2 (x . y' - x' . y) = 2
    assert compose(a, b).tau == 2.0
    assert compose(b, a).tau == -2.0
    assert hnorm(GroupPoint([0.0], [0.0], 16.0)) == pytest.approx(4.0)
    assert hnorm(GroupPoint([3.0], [4.0], 0.0)) == pytest.approx(5.0)


def test_higher_dimension_points():
    a = GroupPoint([1.0, 2.0], [0.5, -1.0], 0.25)
    assert a.N == 2
    assert close(compose(a, inverse(a)), GroupPoint.identity(2))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        compose(GroupPoint([1.0], [0.0], 0.0), GroupPoint([1.0, 0.0], [0.0, 0.0], 0.0))
    with pytest.raises(ValueError):
        dilate(0.0, GroupPoint.identity())
    with pytest.raises(ValueError):
        GroupPoint([math.nan], [0.0], 0.0)
    with pytest.raises(ValueError):
        ball_volume(-1.0)


def test_homogeneous_dimension():
    assert homogeneous_dimension(1) == 4
    assert homogeneous_dimension(3) == 8
    assert geometry(1).Q == 4


def test_unit_ball_volume_closed_forms():
    # horizontal slices are discs of radius (1 - tau^2)^(1/4)
    assert unit_ball_volume(1) == pytest.approx(math.pi ** 2 / 2, rel=1e-12)
    assert unit_ball_volume(2) == pytest.approx(2 * math.pi ** 2 / 3, rel=1e-12)


def test_unit_ball_volume_against_cell_count():
    assert unit_ball_volume(1) == pytest.approx(unit_ball_volume_by_counting(), rel=5e-4)


@given(st.floats(0.1, 10))
def test_ball_volume_scales_with_homogeneous_dimension(r):
    assert ball_volume(r) == pytest.approx(unit_ball_volume(1) * r ** 4, rel=1e-12)


def test_hnorm_rt_matches_point_norm():
    a = GroupPoint([0.6], [0.8], -0.7)
    assert hnorm_rt(1.0, -0.7) == pytest.approx(hnorm(a))


def test_ball_integral_methods_agree_off_center():
    prof = lambda d: (1 + d) ** -5
    c = GroupPoint([0.7], [-0.3], 0.4)
    grid = integrate_ball(prof, c, 1.0, n=96, method="grid")
    polar = integrate_ball(prof, c, 1.0, method="polar")
    assert grid == pytest.approx(polar, rel=0.01)


def test_ball_integral_of_one_is_the_volume():
    assert integrate_radial(lambda s: np.ones_like(s), 1.5) == pytest.approx(ball_volume(1.5), rel=1e-10)


def test_ball_integral_against_monte_carlo():
    ref, se = ball_mass_monte_carlo(lambda r: (1 + r) ** -5, 1.0, n=2_000_000)
    val = integrate_radial(lambda s: (1 + s) ** -5, 1.0)
    assert abs(val - ref) <= 4 * se + 1e-3 * ref


def test_integrate_ball_rejects_bad_input():
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        integrate_ball(lambda d: 1 / d, GroupPoint.identity(), 1.0, method="polar")
    with pytest.raises(ValueError):
        integrate_ball(lambda d: d, GroupPoint.identity(), 1.0, method="spectral")


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_ball_integral_is_monotone_in_radius(a, b):
    lo, hi = sorted((a, b))
    f = lambda s: (1 + s) ** -3
    assert integrate_radial(f, lo) <= integrate_radial(f, hi) + 1e-12
