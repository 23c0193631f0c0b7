import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import paralab as pl
from paralab.space import (SpaceError, check_metric, doubling_report,
                           set_distance)


def test_build_1d_periodic_basics():
    space = pl.build_grid_space([8], 1.0, "periodic")
    assert space.n_points == 8
    np.testing.assert_allclose(space.weights, 1.0)
    # wrap distance between the ends of the ring
    assert space.distances[0, 7] == 1.0
    assert space.distances[0, 4] == 4.0


def test_build_2d_bounded_weights_and_spacing():
    space = pl.build_grid_space([4, 4], 0.5, "bounded")
    np.testing.assert_allclose(space.weights, 0.25)
    # adjacent nodes along the fast axis
    assert space.distances[0, 1] == 0.5
    # no wrap
    assert space.distances[0, 3] == 1.5


def test_build_errors():
    with pytest.raises(SpaceError):
        pl.build_grid_space([], 1.0)
    with pytest.raises(SpaceError):
        pl.build_grid_space([100, 100], 1.0, node_budget=4096)
    with pytest.raises(SpaceError):
        pl.build_grid_space([8], -1.0)


def test_metric_axioms_sampled(ring64, rng):
    assert check_metric(ring64, rng, samples=500) <= 1e-12
    assert np.allclose(ring64.distances, ring64.distances.T)
    assert np.all(np.diag(ring64.distances) == 0)


def test_ball_volume_1d_exact(ring64):
    # open ball of radius 2.5 holds the center and two neighbors on each side
    assert pl.ball_volume(ring64, pl.Ball(3, 2.5)) == 5.0
    assert pl.ball_volume(ring64, pl.Ball(3, 0.5)) == 1.0


def test_ball_volume_monotone_in_radius(ring64):
    vols = [pl.ball_volume(ring64, pl.Ball(0, r)) for r in np.linspace(0.1, 40, 50)]
    assert all(b >= a for a, b in zip(vols, vols[1:]))


def test_ball_growth_2d_exhaustive():
    space = pl.build_grid_space([12, 12], 1.0, "periodic")
    rep = doubling_report(space, samples=32)
    # every center and realized radius, every doubling factor up to 2
    for x in range(space.n_points):
        d = space.distances[x]
        for r in (1.5, 2.5, 3.5):
            v_r = space.weights[d < r].sum()
            v_2r = space.weights[d < 2 * r].sum()
            assert v_2r <= rep.A2 * 2.0 ** rep.n * v_r * (1 + 1e-9)


@pytest.mark.parametrize("dims,lo,hi", [([128], 0.8, 1.2), ([32, 32], 1.7, 2.3)])
def test_doubling_exponent_fit(dims, lo, hi):
    space = pl.build_grid_space(dims, 1.0, "periodic")
    rep = doubling_report(space, samples=64, rng=np.random.default_rng(5))
    assert lo <= rep.n <= hi
    assert rep.A1 >= 1.0


def test_doubling_exponent_1d_64():
    space = pl.build_grid_space([64], 1.0, "periodic")
    rep = doubling_report(space, samples=64, rng=np.random.default_rng(5))
    assert abs(rep.n - 1.0) <= 0.2


def test_doubling_single_point():
    space = pl.build_grid_space([1], 1.0, "bounded")
    rep = doubling_report(space, samples=4)
    assert rep.A1 == 1.0
    assert rep.zero_variance


def test_annulus_partition(ring64):
    ball = pl.Ball(10, 2.0)
    assert set(pl.annulus(ring64, ball, 0)) == set(ring64.ball_members(10, 2.0))
    # shells up to J rebuild the dilated ball
    for j_top in (1, 2, 3):
        union = np.concatenate([pl.annulus(ring64, ball, j)
                                for j in range(j_top + 1)])
        dilated = ring64.ball_members(10, 2.0 ** j_top * ball.radius)
        assert set(union) == set(dilated)
        assert len(union) == len(set(union))


def test_annulus_explicit_shell(ring64):
    ball = pl.Ball(20, 2.0)
    shell = pl.annulus(ring64, ball, 2)
    d = ring64.distances[20]
    expected = np.flatnonzero((d >= 4.0) & (d < 8.0))
    assert set(shell) == set(expected)


def test_average_of_constant_is_constant(ring64, rng):
    c = 2.3 - 1.1j
    for t in (0.5, 2.5, 7.0, 200.0):
        out = pl.average(ring64, t, np.full(64, c))
        np.testing.assert_allclose(out, c)


def test_average_indicator(ring64):
    f = np.zeros(64)
    f[7] = 1.0
    out = pl.average(ring64, 2.5, f)
    assert out[7] == pytest.approx(1.0 / 5.0)


def test_average_cauchy_schwarz(ring64, rng):
    f = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    for t in (1.5, 3.5, 9.0):
        lhs = np.abs(pl.average(ring64, t, f)) ** 2
        rhs = pl.average(ring64, t, np.abs(f) ** 2).real
        assert np.all(lhs <= rhs + 1e-12)


def test_average_sup_contraction_and_mean_limit(ring64, rng):
    f = rng.standard_normal(64)
    for t in (0.5, 4.0, 33.0):
        out = pl.average(ring64, t, f)
        assert np.abs(out).max() <= np.abs(f).max() + 1e-12
    at_diam = pl.average(ring64, ring64.diameter + 1, f)
    np.testing.assert_allclose(at_diam, ring64.mean(f), atol=1e-12)


def test_average_adjoint_identity(ring64, rng):
    f = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    g = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    for t in (1.5, 5.0):
        lhs = ring64.inner(pl.average(ring64, t, f), g)
        rhs = ring64.inner(f, pl.average_adjoint(ring64, t, g))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_set_distance(ring64):
    assert set_distance(ring64, [0, 1], [5, 6]) == 4.0
    assert set_distance(ring64, [0, 1], [1, 2]) == 0.0


def test_descriptor_round_trip():
    space = pl.build_grid_space([6, 4], 0.5, "bounded")
    clone = pl.space_from_descriptor(space.to_descriptor())
    np.testing.assert_allclose(clone.distances, space.distances)
    np.testing.assert_allclose(clone.weights, space.weights)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(min_value=0.3, max_value=40.0),
       seed=st.integers(min_value=0, max_value=2 ** 16))
def test_average_linearity_property(t, seed):
    space = pl.build_grid_space([16], 1.0, "periodic")
    gen = np.random.default_rng(seed)
    f = gen.standard_normal(16)
    g = gen.standard_normal(16)
    a, b = gen.standard_normal(2)
    lhs = pl.average(space, t, a * f + b * g)
    rhs = a * pl.average(space, t, f) + b * pl.average(space, t, g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
