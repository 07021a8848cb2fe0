"""Synthetic weekly markets for training demos and verification runs.

Two generators:

* an alternating two-asset market whose returns flip +amp/-amp out of
  phase each week. The one-step-ahead optimal behavior is known in
  closed form, which makes learned policies easy to judge.
* a heavy-tailed/low-variance pair for probing risk attitude: one asset
  drifts up with fat Student-t shocks, the other compounds almost
  deterministically.

Both emit real AssetSeries so the full feature pipeline (patterns,
normalization) runs unchanged on them.
"""

from __future__ import annotations

from datetime import date as Date, timedelta

import numpy as np

from .data import AssetSeries, Bar, MarketData, assemble_market

_EPOCH = Date(2015, 1, 5)  # a Monday


def _weekly_dates(n: int) -> list[Date]:
    return [_EPOCH + timedelta(weeks=k) for k in range(n)]


def series_from_returns(symbol: str, returns: np.ndarray, start_price: float = 100.0) -> AssetSeries:
    """Weekly bars compounding `returns`; open = previous close."""
    dates = _weekly_dates(len(returns))
    bars = []
    price = start_price
    for d, r in zip(dates, returns):
        close = price * (1.0 + r)
        if close <= 0:
            raise ValueError("synthetic return path crossed zero price")
        bars.append(Bar(
            date=d,
            open=price,
            high=max(price, close),
            low=min(price, close),
            close=close,
            volume=1000.0,
        ))
        price = close
    return AssetSeries(symbol, tuple(bars))


def alternating_market(weeks: int, amplitude: float = 0.02) -> MarketData:
    """Two risky assets with deterministic out-of-phase +-amplitude returns.

    Asset ALT_UP gains `amplitude` on even steps and loses it on odd
    steps; ALT_DOWN mirrors it. The first step (compounded from the
    initial price) follows the same parity.
    """
    steps = np.arange(weeks)
    up = np.where(steps % 2 == 0, amplitude, -amplitude)
    return assemble_market([
        series_from_returns("ALT_UP", up),
        series_from_returns("ALT_DOWN", -up),
    ])


def alternating_best_return(amplitude: float, delta: float) -> float:
    """Best frictionless one-step return any weight choice can realize.

    With two assets returning +amp and -amp and weights on the
    delta-transform range, the maximum of w.R subject to sum(w) = 1 is
    attained at the corner (delta - (delta-1)/2, -(delta-1)/2).
    """
    hi = delta - (delta - 1.0) / 2.0
    lo = 1.0 - hi
    return hi * amplitude + lo * (-amplitude)


def heavy_tail_market(weeks: int, seed: int, df: float = 3.0,
                      scale: float = 0.04, drift: float = 0.004) -> MarketData:
    """A fat-tailed risky asset paired with a near-deterministic one."""
    rng = np.random.default_rng(seed)
    shocks = rng.standard_t(df, size=weeks)
    heavy = np.clip(drift + scale * shocks, -0.6, 0.6)
    calm = 0.001 + 0.0005 * rng.standard_normal(weeks)
    return assemble_market([
        series_from_returns("HEAVY", heavy),
        series_from_returns("CALM", calm),
    ])
