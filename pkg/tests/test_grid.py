import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pdflow.grid import (
    FlowField,
    PyramidParams,
    build_pyramid,
    median_filter_5x5,
    spatial_derivatives,
    temporal_derivative,
    upsample_flow,
    warp_bicubic,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def grids(min_side=2, max_side=12):
    shape = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


# -- validation ----------------------------------------------------------------

def test_flowfield_rejects_bad_input():
    with pytest.raises(ValueError):
        FlowField(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
        FlowField(np.zeros((1, 3)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        FlowField(np.full((3, 3), np.nan), np.zeros((3, 3)))


def test_pyramid_params_ranges():
    for kw in ({"scale_factor": 1.0}, {"levels": 0}, {"warps_per_level": 0}, {"blend_ratio": 1.5}):
        with pytest.raises(ValueError):
            PyramidParams(**kw)


# -- temporal derivative -------------------------------------------------------

def test_temporal_derivative_trivial():
    f = np.random.default_rng(0).random((5, 6))
    assert np.all(temporal_derivative(f, f) == 0)
    np.testing.assert_array_equal(temporal_derivative(np.zeros((4, 4)), np.full((4, 4), 0.5)), 0.5)


def test_temporal_derivative_loop_oracle(rng):
    f1, f2 = rng.random((8, 8)), rng.random((8, 8))
    out = temporal_derivative(f1, f2)
    for y in range(8):
        for x in range(8):
            assert out[y, x] == f2[y, x] - f1[y, x]


def test_temporal_derivative_mismatch():
    with pytest.raises(ValueError):
        temporal_derivative(np.zeros((4, 4)), np.zeros((4, 5)))


@given(grids().flatmap(lambda a: st.tuples(st.just(a), arrays(np.float64, a.shape, elements=finite))))
def test_temporal_derivative_antisymmetric(pair):
    a, b = pair
    np.testing.assert_array_equal(temporal_derivative(a, b), -temporal_derivative(b, a))


# -- spatial derivatives -------------------------------------------------------

@given(st.floats(-5, 5), st.floats(0, 1), st.integers(2, 10), st.integers(2, 10))
def test_spatial_derivatives_constant(c, r, h, w):
    g = np.full((h, w), c)
    fx, fy = spatial_derivatives(g, g, r)
    assert np.all(fx == 0) and np.all(fy == 0)


def test_spatial_derivatives_ramp():
    w, h = 10, 6
    g = np.tile(np.arange(w) / w, (h, 1))
    fx, fy = spatial_derivatives(g, g, 0.3)
    np.testing.assert_allclose(fx[:, 1:-1], 1 / w, rtol=1e-12)
    # replicated boundary: one-sided half step at the edges
    np.testing.assert_allclose(fx[:, 0], 0.5 / w, rtol=1e-12)
    assert np.all(fy == 0)


def test_spatial_derivatives_loop_oracle(rng):
    f1, f2 = rng.random((8, 8)), rng.random((8, 8))
    r = 0.4
    fx, fy = spatial_derivatives(f1, f2, r)
    g = (1 - r) * f1 + r * f2
    for y in range(8):
        for x in range(8):
            xp, xm = min(x + 1, 7), max(x - 1, 0)
            yp, ym = min(y + 1, 7), max(y - 1, 0)
            assert fx[y, x] == pytest.approx((g[y, xp] - g[y, xm]) / 2, abs=1e-15)
            assert fy[y, x] == pytest.approx((g[yp, x] - g[ym, x]) / 2, abs=1e-15)


def test_spatial_derivatives_blend_range():
    with pytest.raises(ValueError):
        spatial_derivatives(np.zeros((3, 3)), np.zeros((3, 3)), 1.2)


# -- warping -------------------------------------------------------------------

@given(grids())
def test_warp_zero_flow_identity(img):
    out = warp_bicubic(img, FlowField.zeros(img.shape))
    np.testing.assert_array_equal(out, img)


def test_warp_integer_shift(rng):
    img = rng.random((9, 11))
    out = warp_bicubic(img, FlowField(np.ones(img.shape), np.zeros(img.shape)))
    np.testing.assert_allclose(out[:, :-1], img[:, 1:], atol=1e-14)
    # right border clamps to the last column
    np.testing.assert_allclose(out[:, -1], img[:, -1], atol=1e-14)


@given(st.floats(-3, 3), arrays(np.float64, (2, 6, 6), elements=st.floats(-20, 20)))
def test_warp_constant_image(c, uv):
    out = warp_bicubic(np.full((6, 6), c), FlowField(uv[0], uv[1]))
    np.testing.assert_allclose(out, c, atol=1e-12)


def test_warp_linear_reproduction(rng):
    # Catmull-Rom reproduces linear functions away from the clamped border
    yy, xx = np.mgrid[0:12, 0:12].astype(float)
    img = 0.3 * xx - 0.2 * yy
    u = FlowField(rng.uniform(-1, 1, img.shape), rng.uniform(-1, 1, img.shape))
    out = warp_bicubic(img, u)
    expect = 0.3 * (xx + u.u1) - 0.2 * (yy + u.u2)
    np.testing.assert_allclose(out[2:-2, 2:-2], expect[2:-2, 2:-2], atol=1e-12)


# -- pyramid -------------------------------------------------------------------

def test_pyramid_sizes():
    lv = build_pyramid(np.zeros((64, 64)), PyramidParams(0.5, 3))
    assert [g.shape for g in lv] == [(64, 64), (32, 32), (16, 16)]
    lv = build_pyramid(np.zeros((16, 16)), PyramidParams(0.5, 5))
    assert [g.shape for g in lv] == [(16, 16), (8, 8)]


@given(st.floats(0, 1), st.integers(1, 5))
def test_pyramid_constant(c, levels):
    for g in build_pyramid(np.full((40, 24), c), PyramidParams(0.5, levels)):
        np.testing.assert_allclose(g, c, atol=1e-12)
        assert min(g.shape) >= 8


def test_pyramid_range_preserved(rng):
    img = rng.random((32, 32))
    for g in build_pyramid(img, PyramidParams(0.5, 3)):
        assert g.min() >= img.min() - 1e-12 and g.max() <= img.max() + 1e-12


# -- upsampling ----------------------------------------------------------------

def test_upsample_constant_and_zero():
    f = upsample_flow(FlowField(np.ones((8, 8)), np.zeros((8, 8))), 16, 16)
    np.testing.assert_allclose(f.u1, 2.0)
    np.testing.assert_allclose(f.u2, 0.0)
    z = upsample_flow(FlowField.zeros((5, 7)), 13, 11)
    assert z.shape == (11, 13) and not z.u1.any() and not z.u2.any()


def test_upsample_rejects_shrink():
    with pytest.raises(ValueError):
        upsample_flow(FlowField.zeros((8, 8)), 4, 8)


def test_upsample_bilinear_oracle():
    h, w = 6, 8
    u1 = np.tile(np.arange(w, dtype=float), (h, 1))
    out = upsample_flow(FlowField(u1, np.zeros((h, w))), 2 * w, 2 * h)
    # pixel-centre mapping: new x -> (x + 0.5)/2 - 0.5 in old coordinates
    for x in range(2, 2 * w - 2):
        xs = (x + 0.5) / 2 - 0.5
        x0 = int(np.floor(xs))
        t = xs - x0
        expect = 2 * ((1 - t) * u1[0, x0] + t * u1[0, x0 + 1])
        np.testing.assert_allclose(out.u1[:, x], expect, rtol=1e-12)


# -- median filter -------------------------------------------------------------

def test_median_constant_and_spike():
    c = FlowField(np.full((7, 7), 3.0), np.full((7, 7), -1.0))
    out = median_filter_5x5(c)
    np.testing.assert_array_equal(out.u1, c.u1)
    spike = np.zeros((9, 9))
    spike[4, 4] = 100.0
    assert median_filter_5x5(FlowField(spike, spike)).u1[4, 4] == 0.0


def test_median_too_small():
    with pytest.raises(ValueError):
        median_filter_5x5(FlowField.zeros((4, 9)))


def test_median_sort_oracle(rng):
    g = rng.standard_normal((9, 9))
    out = median_filter_5x5(FlowField(g, g)).u1
    for y in range(9):
        for x in range(9):
            win = np.sort(g[max(0, y - 2):y + 3, max(0, x - 2):x + 3].ravel())
            assert out[y, x] == win[(win.size - 1) // 2]


@given(arrays(np.float64, st.tuples(st.integers(5, 10), st.integers(5, 10)), elements=finite))
def test_median_order_statistic(g):
    out = median_filter_5x5(FlowField(g, g)).u1
    h, w = g.shape
    for y in range(h):
        for x in range(w):
            assert out[y, x] in g[max(0, y - 2):y + 3, max(0, x - 2):x + 3]


def test_grid_ops_deterministic(rng):
    img = rng.random((20, 20))
    u = FlowField(rng.standard_normal((20, 20)), rng.standard_normal((20, 20)))
    a = warp_bicubic(img, u)
    b = warp_bicubic(img.copy(), FlowField(u.u1.copy(), u.u2.copy()))
    assert a.tobytes() == b.tobytes()
