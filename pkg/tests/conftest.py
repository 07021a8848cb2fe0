import numpy as np
import pytest

from r3l.data import AssetSeries, Bar
from datetime import date, timedelta


def make_bar(day, o, h, l, c, v=100.0):
    return Bar(day, float(o), float(h), float(l), float(c), float(v))


def daily_series(symbol, rows, start=date(2020, 1, 6)):
    """rows: list of (o, h, l, c[, v]) tuples laid out on consecutive weekdays."""
    bars = []
    day = start
    for row in rows:
        o, h, l, c = row[:4]
        v = row[4] if len(row) > 4 else 100.0
        bars.append(make_bar(day, o, h, l, c, v))
        day += timedelta(days=1)
        while day.weekday() >= 5:
            day += timedelta(days=1)
    return AssetSeries(symbol, tuple(bars))


def weekly_series(symbol, closes, volume=100.0, start=date(2020, 1, 6)):
    """One flat-ish bar per week compounding through `closes`."""
    bars = []
    prev = closes[0]
    for k, c in enumerate(closes):
        day = start + timedelta(weeks=k)
        o = prev
        bars.append(make_bar(day, o, max(o, c), min(o, c), c, volume))
        prev = c
    return AssetSeries(symbol, tuple(bars))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
