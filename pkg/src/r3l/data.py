"""OHLCV ingestion, weekly resampling, and state-tensor assembly.

CSV files carry one asset each with header
``date,open,high,low,close,volume`` and ISO-8601 dates. Daily bars are
resampled to the weekly decision frequency (one bar per ISO calendar
week), multiple assets are inner-joined on common dates, and a
deterministic risk-free leg can be synthesized as a flat compounding
series.

A state at decision step t packs, for each asset, a g x h feature
window: the five raw OCHLV channels plus the 18 candlestick-pattern
flags, over the h most recent weekly bars ending at t. Raw price
channels are normalized by the window's last close (so the last close
maps to 1.0) and volume by the window's maximum volume; pattern flags
stay binary. The current portfolio weights and the step index ride
along unchanged.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from .patterns import N_PATTERNS, compute_pattern_flags

RAW_CHANNELS = ("open", "close", "high", "low", "volume")
N_FEATURES = len(RAW_CHANNELS) + N_PATTERNS  # g = 23

CSV_HEADER = ["date", "open", "high", "low", "close", "volume"]


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Bar:
    date: Date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if self.low > min(self.open, self.close):
            raise DataError(f"{self.date}: low above open/close")
        if self.high < max(self.open, self.close):
            raise DataError(f"{self.date}: high below open/close")
        if self.low > self.high:
            raise DataError(f"{self.date}: low above high")
        if self.volume < 0:
            raise DataError(f"{self.date}: negative volume")
        if self.close <= 0:
            raise DataError(f"{self.date}: non-positive close")


@dataclass(frozen=True)
class AssetSeries:
    symbol: str
    bars: tuple[Bar, ...]

    def __post_init__(self):
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DataError(f"{self.symbol}: duplicate date {cur.date}")
            if cur.date < prev.date:
                raise DataError(f"{self.symbol}: dates out of order at {cur.date}")

    def __len__(self):
        return len(self.bars)

    def dates(self) -> list[Date]:
        return [b.date for b in self.bars]


@dataclass(frozen=True)
class State:
    """Feature block (n, g, h), current weights (n,), decision step index."""

    features: np.ndarray
    weights: np.ndarray
    time_index: int

    def __post_init__(self):
        if self.features.ndim != 3:
            raise ValueError("features must be (n_assets, n_features, window)")
        if self.weights.shape != (self.features.shape[0],):
            raise ValueError("weights length must match the asset count")
        if self.time_index < 0:
            raise ValueError("time index must be >= 0")


def load_ohlcv(path, symbol: str | None = None) -> AssetSeries:
    """Load and validate one asset's daily bars from a CSV file."""
    name = symbol if symbol is not None else _stem(path)
    bars = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [col.strip().lower() for col in header] != CSV_HEADER:
            raise DataError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                day = Date.fromisoformat(row[0].strip())
                values = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            try:
                bars.append(Bar(day, *values))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not bars:
        raise DataError(f"{path}: no data rows")
    bars.sort(key=lambda b: b.date)
    return AssetSeries(name, tuple(bars))


def _stem(path) -> str:
    text = str(path)
    base = text.rsplit("/", 1)[-1]
    return base.rsplit(".", 1)[0]


def resample_weekly(series: AssetSeries) -> AssetSeries:
    """Aggregate daily bars into one bar per ISO calendar week.

    open = first open, close = last close, high/low = extremes, volume
    summed; the bar is stamped with the week's last trading date.
    """
    if not series.bars:
        raise DataError(f"{series.symbol}: empty series")
    weekly = []
    for _, group in itertools.groupby(series.bars, key=lambda b: b.date.isocalendar()[:2]):
        chunk = list(group)
        weekly.append(Bar(
            date=chunk[-1].date,
            open=chunk[0].open,
            high=max(b.high for b in chunk),
            low=min(b.low for b in chunk),
            close=chunk[-1].close,
            volume=sum(b.volume for b in chunk),
        ))
    return AssetSeries(series.symbol, tuple(weekly))


def align_series(series_list: list[AssetSeries]) -> list[AssetSeries]:
    """Inner-join assets on common dates (drops anything not shared)."""
    if not series_list:
        raise DataError("no series to align")
    common = set(series_list[0].dates())
    for s in series_list[1:]:
        common &= set(s.dates())
    if not common:
        raise DataError("series share no common dates")
    keep = sorted(common)
    out = []
    for s in series_list:
        by_date = {b.date: b for b in s.bars}
        out.append(AssetSeries(s.symbol, tuple(by_date[d] for d in keep)))
    return out


def slice_series(series: AssetSeries, start: Date | None, end: Date | None) -> AssetSeries:
    bars = tuple(
        b for b in series.bars
        if (start is None or b.date >= start) and (end is None or b.date <= end)
    )
    if not bars:
        raise DataError(f"{series.symbol}: no bars in [{start}, {end}]")
    return AssetSeries(series.symbol, bars)


def make_risk_free(dates: list[Date], rate: float, symbol: str = "CASH") -> AssetSeries:
    """Synthetic risk-free leg: flat bars compounding at `rate` per period."""
    bars = []
    level = 100.0
    for d in dates:
        bars.append(Bar(d, level, level, level, level, 0.0))
        level *= 1.0 + rate
    return AssetSeries(symbol, tuple(bars))


@dataclass
class MarketData:
    """Aligned weekly panel with features precomputed once per asset."""

    symbols: list[str]
    dates: list[Date]
    features: np.ndarray          # (n, g, T) raw channels + pattern flags
    closes: np.ndarray            # (T, n)
    returns: np.ndarray = field(init=False)  # (T, n); returns[t] spans t-1 -> t

    def __post_init__(self):
        r = np.zeros_like(self.closes)
        r[1:] = self.closes[1:] / self.closes[:-1] - 1.0
        self.returns = r

    @property
    def n_assets(self) -> int:
        return len(self.symbols)

    @property
    def length(self) -> int:
        return len(self.dates)


def asset_features(series: AssetSeries) -> np.ndarray:
    """(g, T) matrix: OCHLV rows then the 18 pattern rows."""
    o = np.array([b.open for b in series.bars])
    h = np.array([b.high for b in series.bars])
    l = np.array([b.low for b in series.bars])
    c = np.array([b.close for b in series.bars])
    v = np.array([b.volume for b in series.bars])
    flags = compute_pattern_flags(o, h, l, c)
    return np.vstack([o, c, h, l, v, flags.T])


def assemble_market(series_list: list[AssetSeries]) -> MarketData:
    """Build the aligned feature panel; series must already share dates."""
    dates = series_list[0].dates()
    for s in series_list[1:]:
        if s.dates() != dates:
            raise DataError(f"{s.symbol}: dates not aligned; call align_series first")
    features = np.stack([asset_features(s) for s in series_list])
    closes = np.column_stack([[b.close for b in s.bars] for s in series_list])
    return MarketData([s.symbol for s in series_list], dates, features, closes)


def window_state(
    market: MarketData, weights: np.ndarray, t: int, h: int, time_index: int | None = None
) -> State:
    """State with the normalized h-bar window ending at panel position t.

    `time_index` overrides the step stored on the State (the trading
    environment passes the episode-relative step there); it defaults to
    the panel position itself.
    """
    if h < 1:
        raise ValueError("window must be >= 1")
    if t - h + 1 < 0 or t >= market.length:
        raise DataError(f"insufficient history for window {h} at step {t}")
    block = market.features[:, :, t - h + 1 : t + 1].copy()
    last_close = block[:, 1, -1]                     # close channel
    block[:, 0:4, :] /= last_close[:, None, None]
    vmax = block[:, 4, :].max(axis=1)
    vmax[vmax == 0.0] = 1.0
    block[:, 4, :] /= vmax[:, None]
    weights = np.asarray(weights, dtype=np.float64)
    return State(block, weights.copy(), t if time_index is None else time_index)


def build_state(portfolio: list[AssetSeries], weights: np.ndarray, t: int, h: int) -> State:
    """Spec-level convenience: assemble aligned series and window at t."""
    return window_state(assemble_market(portfolio), weights, t, h)


def state_to_actor_input(state: State) -> np.ndarray:
    """(h, n*g) sequence for the actor: flattened per-step features."""
    n, g, h = state.features.shape
    return state.features.transpose(2, 0, 1).reshape(h, n * g)


def state_to_critic_input(state: State, horizon: int) -> np.ndarray:
    """(h, n*g + n + 1) sequence: features plus weights and scaled time."""
    base = state_to_actor_input(state)
    h = base.shape[0]
    w = np.broadcast_to(state.weights, (h, state.weights.shape[0]))
    t_norm = np.full((h, 1), state.time_index / max(horizon, 1))
    return np.concatenate([base, w, t_norm], axis=1)
