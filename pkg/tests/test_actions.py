import math

import numpy as np
import pytest

from r3l.actions import action_to_weights, delta_transform, softmax, weight_bounds


def test_softmax_uniform_on_zeros():
    np.testing.assert_allclose(softmax(np.zeros(5)), np.full(5, 0.2))


def test_softmax_shift_invariance():
    raw = np.array([0.3, -1.2, 2.0, 0.0, 0.7])
    np.testing.assert_allclose(softmax(raw), softmax(raw + 17.5), atol=1e-15)


def test_softmax_hand_value():
    out = softmax(np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
    e = math.e
    np.testing.assert_allclose(out[0], e / (e + 4.0))
    np.testing.assert_allclose(out[1:], np.full(4, 1.0 / (e + 4.0)))


def test_softmax_rejects_non_finite():
    with pytest.raises(ValueError):
        softmax(np.array([1.0, np.nan]))


def test_delta_bounds_n5_delta3():
    lo, hi = weight_bounds(3.0, 5)
    assert lo == pytest.approx(-0.4)
    assert hi == pytest.approx(2.6)
    rng = np.random.default_rng(0)
    w = delta_transform(softmax(rng.normal(size=(200, 5))), 3.0)
    assert np.all(w > lo) and np.all(w < hi)


def test_delta_one_is_identity():
    sa = softmax(np.array([0.5, -0.2, 1.0]))
    np.testing.assert_allclose(delta_transform(sa, 1.0), sa, atol=1e-15)


def test_delta_zero_gives_equal_weights():
    sa = softmax(np.array([3.0, -1.0, 0.2, 0.9]))
    np.testing.assert_allclose(delta_transform(sa, 0.0), np.full(4, 0.25), atol=1e-15)


def test_negative_delta_rejected():
    with pytest.raises(ValueError):
        delta_transform(np.full(3, 1 / 3), -0.5)


def test_action_to_weights_sums_to_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        w = action_to_weights(rng.normal(size=6), 4.0)
        assert abs(w.sum() - 1.0) <= 1e-9


def test_equal_raw_scores_give_equal_weights():
    for delta in (0.0, 1.0, 3.0, 9.0):
        w = action_to_weights(np.full(5, 2.7), delta)
        np.testing.assert_allclose(w, np.full(5, 0.2), atol=1e-12)


def test_random_sweep_bounds_and_budget():
    rng = np.random.default_rng(7)
    n, delta = 5, 3.0
    raw = rng.normal(scale=2.0, size=(1000, n))
    w = action_to_weights(raw, delta)
    lo, hi = weight_bounds(delta, n)
    assert np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-9)
    assert np.all(w > lo) and np.all(w < hi)


def test_order_preservation():
    rng = np.random.default_rng(3)
    for _ in range(100):
        raw = rng.normal(size=5)
        w = action_to_weights(raw, 2.5)
        order_raw = np.argsort(raw)
        order_w = np.argsort(w)
        np.testing.assert_array_equal(order_raw, order_w)


def test_total_short_exposure_cap():
    # With n=5, delta=3 the most-shorted configuration approaches -160%.
    n, delta = 5, 3.0
    lo, _ = weight_bounds(delta, n)
    assert (n - 1) * lo == pytest.approx(-1.6)
    raw = np.array([50.0, -50.0, -50.0, -50.0, -50.0])
    w = action_to_weights(raw, delta)
    assert w[1:].sum() == pytest.approx(-1.6, abs=1e-6)
