import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salnet.saliency import (accumulate_splats, grid_centers, grid_starts, map_from_probabilities,
                             predict_dense_map, splat_gaussian)

from .helpers import small_model


def test_splat_peak_value():
    canvas = np.zeros((201, 201))
    splat_gaussian(canvas, (100, 100), 1.0, 50.0)
    assert canvas[100, 100] == pytest.approx(6.3662e-4, rel=1e-4)
    assert canvas.argmax() == 100 * 201 + 100


def test_splat_zero_probability():
    canvas = np.random.default_rng(0).random((9, 9))
    before = canvas.copy()
    splat_gaussian(canvas, (4, 4), 0.0, 2.0)
    np.testing.assert_array_equal(canvas, before)


def test_splat_additive():
    one = splat_gaussian(np.zeros((20, 30)), (7, 11), 0.6, 3.0)
    two = splat_gaussian(splat_gaussian(np.zeros((20, 30)), (7, 11), 0.6, 3.0), (7, 11), 0.6, 3.0)
    np.testing.assert_array_equal(two, 2 * one)


@pytest.mark.parametrize("center,f,sigma", [((30, 0), 0.5, 1.0), ((0, -1), 0.5, 1.0), ((1, 1), 1.5, 1.0),
                                            ((1, 1), 0.5, 0.0)])
def test_splat_errors(center, f, sigma):
    with pytest.raises(ValueError):
        splat_gaussian(np.zeros((10, 10)), center, f, sigma)


@pytest.mark.parametrize("size,t", [(64, 16), (65, 16), (40, 12), (12, 12), (33, 7)])
def test_grid_coverage(size, t):
    starts = grid_starts(size, t)
    assert starts[0] == 0 and starts[-1] == size - t
    assert all(b - a <= max(1, t // 2) for a, b in zip(starts, starts[1:]))
    covered = np.zeros(size, dtype=bool)
    for s in starts:
        covered[s:s + t] = True
    assert covered.all()


def test_grid_too_small():
    with pytest.raises(ValueError):
        grid_starts(10, 12)


def test_constant_probabilities_flat_interior():
    t, shape = 8, (96, 96)
    centers = grid_centers(*shape, t)
    m = map_from_probabilities(shape, centers, [0.5] * len(centers), t)
    assert m.values.max() == 1.0
    # splat tails (4 sigma = 2t) fall off near the border; beyond that the surface is flat
    assert m.values[2 * t:-2 * t, 2 * t:-2 * t].min() > 0.999


def test_single_peak_argmax():
    t, shape = 12, (60, 72)
    centers = grid_centers(*shape, t)
    probs = np.zeros(len(centers))
    probs[17] = 1.0
    m = map_from_probabilities(shape, centers, probs, t)
    y, x = np.unravel_index(m.values.argmax(), shape)
    assert (x, y) == centers[17]


def test_scale_invariance():
    t, shape = 8, (40, 48)
    centers = grid_centers(*shape, t)
    p = np.random.default_rng(0).random(len(centers)) * 0.5
    a = map_from_probabilities(shape, centers, p, t).values
    b = map_from_probabilities(shape, centers, 2 * p, t).values
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_zero_probabilities_zero_map():
    centers = grid_centers(16, 16, 8)
    assert not map_from_probabilities((16, 16), centers, [0.0] * len(centers), 8).values.any()


def test_negative_probability_rejected():
    with pytest.raises(ValueError):
        map_from_probabilities((16, 16), [(4, 4)], [-0.1], 8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_argmax_near_best_patch(seed):
    # holds whenever the winner clearly dominates; broad plateaus of near-equal
    # probabilities can shift the summed peak further than t/2
    rng = np.random.default_rng(seed)
    t, shape = 8, (48, 56)
    centers = grid_centers(*shape, t)
    probs = rng.random(len(centers)) * 0.05
    best = int(rng.integers(len(centers)))
    probs[best] = 1.0
    m = map_from_probabilities(shape, centers, probs, t)
    y, x = np.unravel_index(m.values.argmax(), shape)
    cx, cy = centers[best]
    assert max(abs(x - cx), abs(y - cy)) <= t / 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 0.5))
def test_monotone_in_each_probability(seed, bump):
    rng = np.random.default_rng(seed)
    t, shape = 8, (24, 32)
    centers = grid_centers(*shape, t)
    p = rng.random(len(centers)) * 0.5
    q = p.copy()
    q[int(rng.integers(len(q)))] += bump
    assert np.all(accumulate_splats(shape, centers, q, t) >= accumulate_splats(shape, centers, p, t))


def test_dense_map_from_model():
    model = small_model(t=12, c=3, symmetric_output=True)
    feats = np.random.default_rng(0).random((72, 78, 3))
    m = predict_dense_map(model, feats)
    assert m.shape == (72, 78) and m.patch_size == 12 and m.stride == 6
    assert m.values.max() == 1.0 and m.values.min() >= 0
    assert m.values[24:-24, 24:-24].min() > 0.999


def test_dense_map_errors():
    model = small_model(t=12, c=3)
    with pytest.raises(ValueError):
        predict_dense_map(model, np.zeros((10, 40, 3)))
    with pytest.raises(ValueError):
        predict_dense_map(model, np.zeros((40, 40, 4)))
