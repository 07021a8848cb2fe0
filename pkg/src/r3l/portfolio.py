"""Self-financing portfolio accounting and the weekly trading environment.

The cycle per decision step: the agent picks target weights, holdings
are rebalanced at the current close under proportional transaction
costs, then the portfolio grows with next-period returns. Rebalancing
to exact target weights while paying costs out of the portfolio couples
the post-trade value to the trade sizes, so the post-trade value is
resolved by a scalar fixed-point iteration (costs are small, the map is
a contraction). The reward is the per-period value ratio minus one.

Short positions are tracked as negative holdings; costs apply to the
absolute traded amount. A portfolio whose value hits zero or below is
wiped out: the episode terminates with the reward clamped at -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MarketData, State, window_state

WEIGHT_TOL = 1e-8
FIXED_POINT_TOL = 1e-10
FIXED_POINT_CAP = 100


class WipeoutError(RuntimeError):
    """Portfolio value fell to zero or below (terminal)."""


class RebalanceInfeasibleError(RuntimeError):
    """Transaction costs would consume the whole portfolio."""


@dataclass(frozen=True)
class PortfolioState:
    value: float
    weights: np.ndarray
    prices: np.ndarray
    step: int

    def __post_init__(self):
        if self.value <= 0.0:
            raise ValueError(f"portfolio value must be > 0, got {self.value}")
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValueError("portfolio weights must sum to 1")


@dataclass(frozen=True)
class TradePlan:
    """Per-asset trade directions and sizes in shares.

    Exactly one of buy/sell is flagged per asset (a zero-size trade is
    flagged as a buy by convention); sizes are nonnegative share counts.
    """

    buy_flag: np.ndarray
    sell_flag: np.ndarray
    buy_shares: np.ndarray
    sell_shares: np.ndarray

    def __post_init__(self):
        if np.any(self.buy_flag * self.sell_flag != 0):
            raise ValueError("an asset cannot be both bought and sold")
        if np.any(self.buy_flag + self.sell_flag != 1):
            raise ValueError("each asset needs exactly one trade direction flag")
        if np.any(self.buy_shares < 0) or np.any(self.sell_shares < 0):
            raise ValueError("trade sizes must be >= 0")


@dataclass(frozen=True)
class Transition:
    state: State
    action: np.ndarray
    reward: float
    next_state: State
    terminal: bool = False


def reward(prev_value: float, curr_value: float) -> float:
    if prev_value <= 0.0:
        raise ValueError("previous value must be > 0")
    return curr_value / prev_value - 1.0


def grow(p: PortfolioState, returns: np.ndarray) -> PortfolioState:
    """Advance one period: scale value by 1 + w.R, drift the weights."""
    returns = np.asarray(returns, dtype=np.float64)
    factor = 1.0 + float(p.weights @ returns)
    if factor <= 0.0 or p.value * factor <= 0.0:
        raise WipeoutError(f"portfolio wiped out at step {p.step}")
    new_weights = p.weights * (1.0 + returns) / factor
    return PortfolioState(p.value * factor, new_weights, p.prices, p.step + 1)


def rebalance(
    p: PortfolioState,
    target: np.ndarray,
    c1: float,
    c2: float,
) -> tuple[PortfolioState, TradePlan]:
    """Trade to `target` weights, paying c1 on sells and c2 on buys.

    Solves for the post-trade value V satisfying
    V = value - c1 * sells(V) - c2 * buys(V), where the currency flows
    are |V * target_i - holding_i| in the direction of the imbalance.
    Returns the post-trade state (weights exactly `target`) and the
    executed plan.
    """
    if not (0.0 <= c1 < 0.1 and 0.0 <= c2 < 0.1):
        raise ValueError("transaction costs must lie in [0, 0.1)")
    target = np.asarray(target, dtype=np.float64)
    if abs(float(target.sum()) - 1.0) > 1e-6:
        raise ValueError("target weights must sum to 1")
    holdings = p.value * p.weights

    value = p.value
    for _ in range(FIXED_POINT_CAP):
        diff = value * target - holdings
        cost = c2 * diff.clip(min=0.0).sum() + c1 * (-diff).clip(min=0.0).sum()
        new_value = p.value - cost
        if abs(new_value - value) < FIXED_POINT_TOL:
            value = new_value
            break
        value = new_value
    if value <= 0.0:
        raise RebalanceInfeasibleError("costs would consume the portfolio")

    diff = value * target - holdings
    buys = diff.clip(min=0.0)
    sells = (-diff).clip(min=0.0)
    plan = TradePlan(
        buy_flag=(diff >= 0.0).astype(np.int64),
        sell_flag=(diff < 0.0).astype(np.int64),
        buy_shares=buys / p.prices,
        sell_shares=sells / p.prices,
    )
    new_state = PortfolioState(value, target.copy(), p.prices, p.step)
    return new_state, plan


class PortfolioEnv:
    """Weekly decision process over an aligned market panel.

    Each episode starts at a panel position with at least `window` bars
    of history, runs for `horizon` decisions (or until the data or the
    portfolio runs out), and restarts holdings at equal weights with
    `initial_value` cash.
    """

    def __init__(
        self,
        market: MarketData,
        window: int,
        horizon: int,
        sell_cost: float,
        buy_cost: float,
        initial_value: float = 10_000.0,
    ):
        if market.length < window + 1:
            raise ValueError("market shorter than one window plus a step")
        self.market = market
        self.window = window
        self.horizon = horizon
        self.sell_cost = sell_cost
        self.buy_cost = buy_cost
        self.initial_value = initial_value
        self.n_assets = market.n_assets
        self._pos = 0
        self._start = 0
        self._end = 0
        self._portfolio: PortfolioState | None = None

    def min_start(self) -> int:
        return self.window - 1

    def max_start(self) -> int:
        return self.market.length - 2

    def reset(self, start: int) -> State:
        if start < self.min_start() or start > self.max_start():
            raise ValueError(f"start {start} outside [{self.min_start()}, {self.max_start()}]")
        self._start = start
        self._pos = start
        self._end = min(start + self.horizon, self.market.length - 1)
        weights = np.full(self.n_assets, 1.0 / self.n_assets)
        self._portfolio = PortfolioState(
            self.initial_value, weights, self.market.closes[start].copy(), start)
        return self._observe()

    def _observe(self) -> State:
        return window_state(
            self.market, self._portfolio.weights, self._pos, self.window,
            time_index=self._pos - self._start)

    @property
    def portfolio(self) -> PortfolioState:
        return self._portfolio

    def step(self, target_weights: np.ndarray) -> tuple[Transition, bool, dict]:
        """Rebalance to the action, grow one period, emit the transition."""
        if self._portfolio is None:
            raise RuntimeError("call reset() before step()")
        state = self._observe()
        before = self._portfolio
        action = np.asarray(target_weights, dtype=np.float64)
        terminal = False
        info: dict = {}
        try:
            traded, plan = rebalance(before, action, self.sell_cost, self.buy_cost)
            info["turnover"] = float(np.abs(traded.weights - before.weights).sum())
            grown = grow(traded, self.market.returns[self._pos + 1])
            r = reward(before.value, grown.value)
            self._portfolio = PortfolioState(
                grown.value, grown.weights, self.market.closes[self._pos + 1].copy(), grown.step)
        except (WipeoutError, RebalanceInfeasibleError):
            r = -1.0
            terminal = True
            info["turnover"] = 0.0
            # Keep the previous holdings for the terminal observation.
            self._portfolio = before
        self._pos += 1
        next_state = window_state(
            self.market, self._portfolio.weights, self._pos, self.window,
            time_index=self._pos - self._start)
        done = terminal or self._pos >= self._end
        info["value"] = self._portfolio.value
        info["weights"] = self._portfolio.weights.copy()
        return Transition(state, action, r, next_state, terminal), done, info
