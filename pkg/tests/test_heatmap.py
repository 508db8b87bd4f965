import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from luvli.errors import AllNonPositive, InvalidDimensions
from luvli.geometry import Point2
from luvli.heatmap import (
    Heatmap,
    SigmaKind,
    argmax_quarter_offset,
    render_gaussian,
    spatial_mean,
    spatial_mean_grad,
)

RELU = SigmaKind("relu")
SOFTMAX = SigmaKind("softmax")
TEMPERED = SigmaKind("temperature_softmax", 0.5)


def sparse(width, height, pixels):
    v = np.zeros((height, width))
    for (x, y), value in pixels.items():
        v[y, x] = value
    return Heatmap(v)


def test_heatmap_validation():
    with pytest.raises(InvalidDimensions):
        Heatmap(np.zeros((0, 3)))
    with pytest.raises(InvalidDimensions):
        Heatmap(np.zeros(5))
    with pytest.raises(ValueError):
        Heatmap(np.array([[0.0, np.nan]]))


def test_heatmap_is_immutable():
    H = Heatmap(np.ones((2, 3)))
    assert (H.width, H.height) == (3, 2)
    with pytest.raises(ValueError):
        H.values[0, 0] = 2.0


def test_csv_roundtrip(rng):
    H = Heatmap(rng.normal(size=(5, 7)))
    back = Heatmap.from_csv(H.to_csv())
    np.testing.assert_array_equal(back.values, H.values)


def test_sigma_kind_validation():
    assert SigmaKind("temperature_softmax").temperature == 0.1
    with pytest.raises(ValueError):
        SigmaKind("temperature_softmax", 0.0)
    with pytest.raises(ValueError):
        SigmaKind("sparsemax")


def test_render_examples():
    H = render_gaussian(Point2(3, 3), 1.0, 7, 7)
    assert H.values[3, 3] == 1.0
    assert H.values[3, 4] == pytest.approx(math.exp(-0.5))
    assert render_gaussian(Point2(0, 0), 1.0, 1, 1).values.tolist() == [[1.0]]
    G = render_gaussian(Point2(31.3, 40.7), 1.5)
    y, x = np.unravel_index(np.argmax(G.values), G.values.shape)
    assert (x, y) == (31, 41)
    with pytest.raises(InvalidDimensions):
        render_gaussian(Point2(0, 0), 1.0, 0, 4)


def test_render_off_grid_center_has_peak_below_one():
    H = render_gaussian(Point2(-3.5, 10), 2.0, 16, 16)
    assert 0 < H.values.max() < 1


def test_spatial_mean_examples():
    assert spatial_mean(sparse(32, 32, {(10, 20): 5.0})) == Point2(10, 20)
    assert spatial_mean(sparse(3, 3, {(0, 0): 1.0, (2, 0): 1.0})) == Point2(1, 0)
    m = spatial_mean(render_gaussian(Point2(31.3, 40.7), 1.5))
    assert abs(m.x - 31.3) < 0.05 and abs(m.y - 40.7) < 0.05


def test_spatial_mean_matches_direct_summation():
    H = render_gaussian(Point2(31.3, 40.7), 1.5)
    v = H.values
    total = sum(v[y, x] for y in range(64) for x in range(64))
    mx = sum(v[y, x] * x for y in range(64) for x in range(64)) / total
    my = sum(v[y, x] * y for y in range(64) for x in range(64)) / total
    m = spatial_mean(H)
    assert (m.x, m.y) == pytest.approx((mx, my), abs=1e-12)


def test_relu_requires_positive_pixel():
    with pytest.raises(AllNonPositive):
        spatial_mean(Heatmap(-np.ones((4, 4))))
    with pytest.raises(AllNonPositive):
        spatial_mean_grad(Heatmap(np.zeros((4, 4))))


def test_softmax_accepts_non_positive_maps():
    m = spatial_mean(Heatmap(-np.ones((5, 5))), SOFTMAX)
    assert (m.x, m.y) == pytest.approx((2, 2))


def test_softmax_is_overflow_safe():
    v = np.zeros((4, 4))
    v[1, 2] = 1e4
    m = spatial_mean(Heatmap(v), SigmaKind("temperature_softmax", 1e-3))
    assert (m.x, m.y) == pytest.approx((2, 1))


def test_temperature_limits():
    H = render_gaussian(Point2(10.2, 5.6), 1.5, 24, 16)
    cold = spatial_mean(H, SigmaKind("temperature_softmax", 1e-3))
    assert (cold.x, cold.y) == pytest.approx((10, 6), abs=0.01)
    hot = spatial_mean(H, SigmaKind("temperature_softmax", 1e6))
    assert (hot.x, hot.y) == pytest.approx((11.5, 7.5), abs=0.01)


grids = arrays(float, (6, 5), elements=st.floats(-1, 1))


@given(grids, st.floats(0.01, 100))
def test_relu_mean_scale_invariant(g, c):
    g[2, 3] = 0.5
    a, b = spatial_mean(Heatmap(g)), spatial_mean(Heatmap(c * g))
    assert (a.x, a.y) == pytest.approx((b.x, b.y), abs=1e-9)


@given(grids)
def test_relu_mean_ignores_non_positive_pixels(g):
    g[2, 3] = 0.5
    clipped = np.maximum(g, 0)
    a, b = spatial_mean(Heatmap(g)), spatial_mean(Heatmap(clipped))
    assert (a.x, a.y) == pytest.approx((b.x, b.y), abs=1e-12)


@given(grids, st.sampled_from([RELU, SOFTMAX, TEMPERED]))
def test_mean_lies_in_grid_hull(g, sigma):
    g[0, 0] = 0.5
    m = spatial_mean(Heatmap(g), sigma)
    assert -1e-12 <= m.x <= 4 + 1e-12 and -1e-12 <= m.y <= 5 + 1e-12


def test_grad_examples():
    G = spatial_mean_grad(sparse(8, 8, {(3, 4): 2.0}))
    np.testing.assert_array_equal(G[4, 3], (0, 0))
    G = spatial_mean_grad(sparse(3, 3, {(0, 0): 1.0, (2, 0): 1.0}))
    np.testing.assert_allclose(G[0, 0], (-0.5, 0))
    np.testing.assert_allclose(G[1, 1], (0, 0))


def _fd_grad(H, sigma, h=1e-5):
    v = H.values
    out = np.empty(v.shape + (2,))
    for idx in np.ndindex(v.shape):
        up, dn = v.copy(), v.copy()
        up[idx] += h
        dn[idx] -= h
        a, b = spatial_mean(Heatmap(up), sigma), spatial_mean(Heatmap(dn), sigma)
        out[idx] = ((a.x - b.x) / (2 * h), (a.y - b.y) / (2 * h))
    return out


@pytest.mark.parametrize("sigma", [RELU, SOFTMAX, TEMPERED], ids=lambda s: s.variant)
def test_grad_matches_finite_differences(sigma):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        # keep ReLU pixels away from the kink at zero
        H = Heatmap(rng.uniform(0.1, 1.0, size=(8, 8)))
        a, n = spatial_mean_grad(H, sigma), _fd_grad(H, sigma)
        worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(np.maximum(abs(a), abs(n)), 1e-8))))
    assert worst < 1e-6


@pytest.mark.parametrize("second, expected", [((4, 3), (3.25, 3)), ((3, 2), (3, 2.75)),
                                              ((2, 2), (3 - 0.25 / math.sqrt(2), 3 - 0.25 / math.sqrt(2)))])
def test_argmax_quarter_offset_examples(second, expected):
    H = sparse(8, 8, {(3, 3): 1.0, second: 0.5})
    p = argmax_quarter_offset(H)
    assert (p.x, p.y) == pytest.approx(expected)


def test_argmax_on_rendered_gaussian():
    p = argmax_quarter_offset(render_gaussian(Point2(31.3, 40.7), 1.5))
    assert (p.x, p.y) == pytest.approx((31.25, 41.0))


def test_argmax_ties_follow_row_major_order():
    H = sparse(4, 4, {(1, 1): 1.0, (2, 1): 1.0, (1, 2): 1.0})
    p = argmax_quarter_offset(H)
    assert (p.x, p.y) == (1.25, 1.0)


def test_argmax_needs_two_pixels():
    with pytest.raises(InvalidDimensions):
        argmax_quarter_offset(Heatmap(np.ones((1, 1))))


def test_subpixel_advantage_over_argmax():
    rng = np.random.default_rng(3)
    s = 1.5
    sm, am = [], []
    for _ in range(200):
        c = Point2(*rng.uniform(3 * s, 63 - 3 * s, size=2))
        H = render_gaussian(c, s)
        m, a = spatial_mean(H), argmax_quarter_offset(H)
        sm.append(math.dist((m.x, m.y), (c.x, c.y)))
        am.append(math.dist((a.x, a.y), (c.x, c.y)))
    assert max(sm) < 0.05
    assert max(am) > 0.3
