"""Candlestick pattern flags used as binary state features.

Eighteen classic patterns, evaluated per bar over an OHLC series. The
exact rules below are fixed so that the features are deterministic:

* body = close - open; range = high - low; upper/lower shadow measured
  from the body to the respective extreme.
* bearish / bullish: sign of the body.
* significant: |body| >= 70% of the bar range.
* doji: |body| <= 5% of the bar range (a flat bar with open == close
  counts).
* spinning top: not a doji, |body| <= a third of the range, and both
  shadows at least as long as the body.
* hammer shape: lower shadow >= 2x the body, upper shadow <= the body;
  inverse hammer mirrors it. The shape after a bearish bar is a hammer
  (resp. inverse hammer); after a bullish bar it is a hanging man
  (resp. shooting star).
* engulfing: previous and current bodies of opposite sign, current body
  strictly containing the previous one.
* harami: opposite-sign bodies, current body strictly inside the
  previous one.
* piercing line / dark cloud cover: opposite-sign pair where the
  current bar opens beyond the previous close and closes past the
  midpoint of the previous body without engulfing it.
* morning / evening star: three bars, the middle body gapping entirely
  past the first close, the third closing beyond the midpoint of the
  first body.
* three black crows: three bearish bars with falling closes, each
  opening inside the previous body.

Bars without enough lookback for a multi-bar pattern get 0 for it.
"""

from __future__ import annotations

import numpy as np

PATTERN_NAMES = (
    "bearish",
    "bullish",
    "significant",
    "hammer",
    "inverse_hammer",
    "bullish_engulfing",
    "piercing_line",
    "morning_star",
    "bullish_harami",
    "hanging_man",
    "shooting_star",
    "bearish_engulfing",
    "evening_star",
    "three_black_crows",
    "dark_cloud_cover",
    "bearish_harami",
    "doji",
    "spinning_top",
)

N_PATTERNS = len(PATTERN_NAMES)

BODY_SHADOW_RATIO = 2.0
DOJI_BODY_FRACTION = 0.05
SIGNIFICANT_BODY_FRACTION = 0.70
SPINNING_BODY_FRACTION = 1.0 / 3.0


def _shift(arr: np.ndarray, k: int) -> np.ndarray:
    """Series shifted k bars into the past, front-padded with NaN."""
    out = np.full_like(arr, np.nan)
    out[k:] = arr[:-k] if k else arr
    return out


def compute_pattern_flags(o: np.ndarray, h: np.ndarray, l: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Return a (T, 18) float array of 0/1 flags in PATTERN_NAMES order."""
    o = np.asarray(o, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if o.shape[0] < 3:
        raise ValueError("pattern detection needs at least 3 bars")

    body = c - o
    absb = np.abs(body)
    rng = h - l
    upper = h - np.maximum(o, c)
    lower = np.minimum(o, c) - l

    bearish = body < 0.0
    bullish = body > 0.0
    significant = (rng > 0.0) & (absb >= SIGNIFICANT_BODY_FRACTION * rng)
    doji = absb <= DOJI_BODY_FRACTION * rng
    spinning_top = (
        (rng > 0.0)
        & (absb > DOJI_BODY_FRACTION * rng)
        & (absb <= SPINNING_BODY_FRACTION * rng)
        & (upper >= absb)
        & (lower >= absb)
    )

    hammer_shape = (absb > 0.0) & (lower >= BODY_SHADOW_RATIO * absb) & (upper <= absb)
    inverse_shape = (absb > 0.0) & (upper >= BODY_SHADOW_RATIO * absb) & (lower <= absb)

    with np.errstate(invalid="ignore"):
        o1, c1 = _shift(o, 1), _shift(c, 1)
        o2, c2 = _shift(o, 2), _shift(c, 2)
        prev_bearish = c1 < o1
        prev_bullish = c1 > o1

        hammer = hammer_shape & prev_bearish
        hanging_man = hammer_shape & prev_bullish
        inverse_hammer = inverse_shape & prev_bearish
        shooting_star = inverse_shape & prev_bullish

        bullish_engulfing = prev_bearish & bullish & (o < c1) & (c > o1)
        bearish_engulfing = prev_bullish & bearish & (o > c1) & (c < o1)
        bullish_harami = prev_bearish & bullish & (o > c1) & (c < o1)
        bearish_harami = prev_bullish & bearish & (o < c1) & (c > o1)

        mid1 = 0.5 * (o1 + c1)
        piercing_line = prev_bearish & bullish & (o < c1) & (c > mid1) & (c < o1)
        dark_cloud_cover = prev_bullish & bearish & (o > c1) & (c < mid1) & (c > o1)

        # Three-bar patterns: index 2 is the oldest bar of the triple.
        bar1_bearish = c2 < o2
        bar1_bullish = c2 > o2
        mid_first = 0.5 * (o2 + c2)
        body_hi_mid = np.maximum(o1, c1)
        body_lo_mid = np.minimum(o1, c1)
        morning_star = bar1_bearish & (body_hi_mid < c2) & bullish & (c > mid_first)
        evening_star = bar1_bullish & (body_lo_mid > c2) & bearish & (c < mid_first)

        crows = (
            bar1_bearish
            & prev_bearish
            & bearish
            & (c1 < c2) & (c < c1)
            & (o1 < o2) & (o1 > c2)
            & (o < o1) & (o > c1)
        )

    columns = {
        "bearish": bearish,
        "bullish": bullish,
        "significant": significant,
        "hammer": hammer,
        "inverse_hammer": inverse_hammer,
        "bullish_engulfing": bullish_engulfing,
        "piercing_line": piercing_line,
        "morning_star": morning_star,
        "bullish_harami": bullish_harami,
        "hanging_man": hanging_man,
        "shooting_star": shooting_star,
        "bearish_engulfing": bearish_engulfing,
        "evening_star": evening_star,
        "three_black_crows": crows,
        "dark_cloud_cover": dark_cloud_cover,
        "bearish_harami": bearish_harami,
        "doji": doji,
        "spinning_top": spinning_top,
    }
    # Comparisons against the NaN padding are False, which is exactly the
    # "insufficient lookback -> 0" contract for multi-bar patterns.
    flags = np.zeros((o.shape[0], N_PATTERNS))
    for j, name in enumerate(PATTERN_NAMES):
        flags[:, j] = columns[name].astype(np.float64)
    return flags
