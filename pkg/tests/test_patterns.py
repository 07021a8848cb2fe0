"""Pattern flags against a straight-line per-bar re-encoding of each rule."""

import numpy as np
import pytest

from r3l.patterns import PATTERN_NAMES, compute_pattern_flags


def reference_flags(o, h, l, c):
    """Independent scalar encoding of the documented pattern rules."""
    t = len(o)
    out = np.zeros((t, 18))

    def body(k):
        return c[k] - o[k]

    def rng(k):
        return h[k] - l[k]

    def upper(k):
        return h[k] - max(o[k], c[k])

    def lower(k):
        return min(o[k], c[k]) - l[k]

    for k in range(t):
        b = body(k)
        ab = abs(b)
        r = rng(k)
        flags = {}
        flags["bearish"] = b < 0
        flags["bullish"] = b > 0
        flags["significant"] = r > 0 and ab >= 0.7 * r
        flags["doji"] = ab <= 0.05 * r
        flags["spinning_top"] = (
            r > 0 and 0.05 * r < ab <= r / 3 and upper(k) >= ab and lower(k) >= ab
        )
        hammer_shape = ab > 0 and lower(k) >= 2 * ab and upper(k) <= ab
        inverse_shape = ab > 0 and upper(k) >= 2 * ab and lower(k) <= ab
        flags["hammer"] = flags["hanging_man"] = False
        flags["inverse_hammer"] = flags["shooting_star"] = False
        flags["bullish_engulfing"] = flags["bearish_engulfing"] = False
        flags["bullish_harami"] = flags["bearish_harami"] = False
        flags["piercing_line"] = flags["dark_cloud_cover"] = False
        flags["morning_star"] = flags["evening_star"] = False
        flags["three_black_crows"] = False
        if k >= 1:
            pb = body(k - 1)
            flags["hammer"] = hammer_shape and pb < 0
            flags["hanging_man"] = hammer_shape and pb > 0
            flags["inverse_hammer"] = inverse_shape and pb < 0
            flags["shooting_star"] = inverse_shape and pb > 0
            flags["bullish_engulfing"] = pb < 0 and b > 0 and o[k] < c[k - 1] and c[k] > o[k - 1]
            flags["bearish_engulfing"] = pb > 0 and b < 0 and o[k] > c[k - 1] and c[k] < o[k - 1]
            flags["bullish_harami"] = pb < 0 and b > 0 and o[k] > c[k - 1] and c[k] < o[k - 1]
            flags["bearish_harami"] = pb > 0 and b < 0 and o[k] < c[k - 1] and c[k] > o[k - 1]
            mid = 0.5 * (o[k - 1] + c[k - 1])
            flags["piercing_line"] = (
                pb < 0 and b > 0 and o[k] < c[k - 1] and c[k] > mid and c[k] < o[k - 1]
            )
            flags["dark_cloud_cover"] = (
                pb > 0 and b < 0 and o[k] > c[k - 1] and c[k] < mid and c[k] > o[k - 1]
            )
        if k >= 2:
            b1 = body(k - 2)
            mid1 = 0.5 * (o[k - 2] + c[k - 2])
            hi_mid = max(o[k - 1], c[k - 1])
            lo_mid = min(o[k - 1], c[k - 1])
            flags["morning_star"] = b1 < 0 and hi_mid < c[k - 2] and b > 0 and c[k] > mid1
            flags["evening_star"] = b1 > 0 and lo_mid > c[k - 2] and b < 0 and c[k] < mid1
            flags["three_black_crows"] = (
                b1 < 0 and body(k - 1) < 0 and b < 0
                and c[k - 1] < c[k - 2] and c[k] < c[k - 1]
                and o[k - 1] < o[k - 2] and o[k - 1] > c[k - 2]
                and o[k] < o[k - 1] and o[k] > c[k - 1]
            )
        for j, name in enumerate(PATTERN_NAMES):
            out[k, j] = 1.0 if flags[name] else 0.0
    return out


def _random_walk_bars(n, seed):
    rng = np.random.default_rng(seed)
    c = 100.0 * np.cumprod(1.0 + rng.normal(0, 0.02, n))
    o = np.concatenate([[100.0], c[:-1]]) * (1.0 + rng.normal(0, 0.01, n))
    hi = np.maximum(o, c) * (1.0 + np.abs(rng.normal(0, 0.01, n)))
    lo = np.minimum(o, c) * (1.0 - np.abs(rng.normal(0, 0.01, n)))
    return o, hi, lo, c


def test_matches_reference_on_random_walk():
    o, h, l, c = _random_walk_bars(400, seed=11)
    np.testing.assert_array_equal(compute_pattern_flags(o, h, l, c), reference_flags(o, h, l, c))


def test_matches_reference_on_spiky_bars():
    # Exaggerated shadows to hit the hammer-family and star rules more often.
    rng = np.random.default_rng(5)
    n = 300
    o, h, l, c = _random_walk_bars(n, seed=6)
    h = h * (1.0 + np.abs(rng.normal(0, 0.03, n)))
    l = l * (1.0 - np.abs(rng.normal(0, 0.03, n)))
    np.testing.assert_array_equal(compute_pattern_flags(o, h, l, c), reference_flags(o, h, l, c))


def test_doji_on_flat_body():
    o = np.array([10.0, 10.0, 10.0])
    c = np.array([10.0, 10.0, 10.0])
    h = np.array([10.0, 10.5, 10.0])
    l = np.array([10.0, 9.5, 10.0])
    flags = compute_pattern_flags(o, h, l, c)
    doji = PATTERN_NAMES.index("doji")
    assert flags[:, doji].tolist() == [1.0, 1.0, 1.0]


def test_body_sign_flags():
    o = np.array([10.0, 10.0, 10.0])
    c = np.array([11.0, 9.0, 10.0])
    h = np.array([11.0, 10.0, 10.0])
    l = np.array([10.0, 9.0, 10.0])
    flags = compute_pattern_flags(o, h, l, c)
    bull = PATTERN_NAMES.index("bullish")
    bear = PATTERN_NAMES.index("bearish")
    assert flags[0, bull] == 1.0 and flags[0, bear] == 0.0
    assert flags[1, bull] == 0.0 and flags[1, bear] == 1.0
    assert flags[2, bull] == 0.0 and flags[2, bear] == 0.0


def test_bullish_engulfing_construction():
    # Bar 2's body strictly contains bar 1's bearish body.
    o = np.array([10.0, 10.0, 9.0])
    c = np.array([10.0, 9.5, 10.5])
    h = np.array([10.1, 10.1, 10.6])
    l = np.array([9.9, 9.4, 8.9])
    flags = compute_pattern_flags(o, h, l, c)
    assert flags[2, PATTERN_NAMES.index("bullish_engulfing")] == 1.0
    assert flags[2, PATTERN_NAMES.index("bearish_engulfing")] == 0.0


def test_flags_are_binary_and_deterministic():
    o, h, l, c = _random_walk_bars(200, seed=3)
    a = compute_pattern_flags(o, h, l, c)
    b = compute_pattern_flags(o, h, l, c)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_insufficient_lookback_zeroes_multibar_patterns():
    o, h, l, c = _random_walk_bars(50, seed=9)
    flags = compute_pattern_flags(o, h, l, c)
    multibar = [name for name in PATTERN_NAMES
                if name not in ("bearish", "bullish", "significant", "doji", "spinning_top")]
    for name in multibar:
        assert flags[0, PATTERN_NAMES.index(name)] == 0.0
    three_bar = ["morning_star", "evening_star", "three_black_crows"]
    for name in three_bar:
        assert flags[1, PATTERN_NAMES.index(name)] == 0.0


def test_requires_three_bars():
    with pytest.raises(ValueError):
        compute_pattern_flags(np.ones(2), np.ones(2), np.ones(2), np.ones(2))
