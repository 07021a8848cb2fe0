"""Strategy evaluation, benchmark policies, and performance metrics.

A strategy is a callable receiving a StrategyContext (current state
window, drifted holdings, trailing returns) and returning target
weights for that week. `run_strategy` drives any strategy through the
same self-financing accounting the learner trains against and records
the equity curve. `metrics` reduces a curve to the six reported
numbers: total return, per-period standard deviation, Sharpe and
Sortino ratios, empirical value-at-risk, and average turnover.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .actions import action_to_weights
from .autodiff import no_grad
from .config import RunConfig
from .data import MarketData, State, state_to_actor_input
from .nn import ActorNetwork
from .portfolio import PortfolioEnv


@dataclass(frozen=True)
class StrategyContext:
    step: int                      # decisions made so far (0 on the first call)
    state: State                   # normalized feature window at the decision point
    weights: np.ndarray            # current (drifted) holdings
    returns_window: np.ndarray     # trailing per-period returns, shape (k, n)
    prices: np.ndarray


Strategy = Callable[[StrategyContext], np.ndarray]


@dataclass
class EquityCurve:
    steps: list[int]
    values: np.ndarray
    weights: list[np.ndarray]
    turnovers: np.ndarray          # per-decision sum |post-trade - pre-trade| weights

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("curve steps must be strictly increasing")


@dataclass(frozen=True)
class MetricsReport:
    total_return: float
    std_dev: float
    sharpe: float
    sortino: float
    value_at_risk: float
    turnover: float

    def __post_init__(self):
        if self.std_dev < 0 or self.turnover < 0:
            raise ValueError("SD and AT must be nonnegative")

    def as_row(self) -> tuple:
        return (self.total_return, self.std_dev, self.sharpe,
                self.value_at_risk, self.sortino, self.turnover)


METRICS_COLUMNS = ("strategy", "TR", "SD", "SR1", "VAR", "SR2", "AT")


def run_strategy(
    strategy: Strategy,
    market: MarketData,
    cfg: RunConfig,
    start: int | None = None,
    horizon: int | None = None,
) -> EquityCurve:
    """Weekly loop of strategy -> rebalance -> grow from `initial_money`.

    Defaults to the earliest decision point with a full feature window
    and runs to the end of the panel.
    """
    if start is None:
        start = cfg.window - 1
    if horizon is None:
        horizon = market.length - 1 - start
    if horizon < 1:
        raise ValueError("not enough data for a single decision")
    env = PortfolioEnv(market, cfg.window, horizon,
                       cfg.sell_cost, cfg.buy_cost, cfg.initial_money)
    state = env.reset(start)

    steps = [0]
    values = [cfg.initial_money]
    weights = [env.portfolio.weights.copy()]
    turnovers = []
    for k in range(horizon):
        pos = start + k
        lo = max(1, pos - cfg.window + 1)
        ctx = StrategyContext(
            step=k,
            state=state,
            weights=env.portfolio.weights.copy(),
            returns_window=market.returns[lo : pos + 1],
            prices=market.closes[pos],
        )
        transition, done, info = env.step(strategy(ctx))
        steps.append(k + 1)
        values.append(info["value"])
        weights.append(info["weights"])
        turnovers.append(info["turnover"])
        state = transition.next_state
        if done:
            break
    return EquityCurve(steps, np.array(values), weights, np.array(turnovers))


# ---------------------------------------------------------------------------
# Benchmark strategies
# ---------------------------------------------------------------------------

def buy_and_hold() -> Strategy:
    """Equal weights at the first decision, never traded afterwards."""

    def strategy(ctx: StrategyContext) -> np.ndarray:
        if ctx.step == 0:
            n = ctx.weights.shape[0]
            return np.full(n, 1.0 / n)
        return ctx.weights

    return strategy


def sell_and_hold() -> Strategy:
    """Short every risky asset, park 200% in the (last) risk-free leg."""

    def strategy(ctx: StrategyContext) -> np.ndarray:
        if ctx.step == 0:
            n = ctx.weights.shape[0]
            w = np.full(n, -1.0 / (n - 1))
            w[-1] = 2.0
            return w
        return ctx.weights

    return strategy


def random_strategy(rng: np.random.Generator, delta: float) -> Strategy:
    """Fresh standard-normal raw scores through the weight map each week."""

    def strategy(ctx: StrategyContext) -> np.ndarray:
        return action_to_weights(rng.standard_normal(ctx.weights.shape[0]), delta)

    return strategy


def mean_variance_weights(mu: np.ndarray, cov: np.ndarray, zeta: float,
                          ridge: float = 1e-6) -> np.ndarray:
    """Closed-form budget-constrained mean-variance weights.

    Maximizes w.mu - zeta * w' cov w subject to sum(w) = 1:
    w = cov^-1 (mu - lambda 1) / (2 zeta) with lambda chosen to satisfy
    the budget. The covariance is ridge-regularized before solving.
    """
    if zeta <= 0.0:
        raise ValueError("mean-variance risk aversion must be > 0")
    mu = np.asarray(mu, dtype=np.float64)
    n = mu.shape[0]
    a = np.asarray(cov, dtype=np.float64) + ridge * np.eye(n)
    ones = np.ones(n)
    try:
        x_mu = np.linalg.solve(a, mu)
        x_one = np.linalg.solve(a, ones)
    except np.linalg.LinAlgError:
        raise ValueError("covariance singular even after regularization") from None
    lam = (ones @ x_mu - 2.0 * zeta) / (ones @ x_one)
    w = (x_mu - lam * x_one) / (2.0 * zeta)
    return w


def mean_variance_strategy(zeta: float, ridge: float = 1e-6) -> Strategy:
    """Rolling-window sample-moment mean-variance allocation."""

    def strategy(ctx: StrategyContext) -> np.ndarray:
        window = ctx.returns_window
        if window.shape[0] < 2:
            n = ctx.weights.shape[0]
            return np.full(n, 1.0 / n)
        mu = window.mean(axis=0)
        cov = np.cov(window.T, ddof=1)
        return mean_variance_weights(mu, np.atleast_2d(cov), zeta, ridge)

    return strategy


def policy_strategy(actor: ActorNetwork, delta: float) -> Strategy:
    """Deterministic trained policy: actor scores through the weight map."""

    def strategy(ctx: StrategyContext) -> np.ndarray:
        with no_grad():
            raw = actor.forward(state_to_actor_input(ctx.state)[None]).data[0]
        return action_to_weights(raw, delta)

    return strategy


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _degenerate_ratio(excess: float) -> float:
    """Ratio with zero dispersion: 0 for zero excess, else not-a-value."""
    return 0.0 if abs(excess) < 1e-12 else float("nan")


def empirical_var(returns: np.ndarray, alpha: float) -> float:
    """Empirical VaR: negated lower (1-alpha) sample quantile of returns."""
    return float(-np.quantile(np.asarray(returns, dtype=np.float64),
                              1.0 - alpha, method="lower"))


def metrics(curve: EquityCurve, risk_free: float, alpha: float = 0.95) -> MetricsReport:
    """The six performance numbers for an equity curve.

    Per-period returns are consecutive value ratios minus one. SD is
    the sample standard deviation; Sortino uses the downside deviation
    below the risk-free rate with all periods in the denominator; AT
    halves the summed per-decision weight turnover. Zero dispersion
    maps the affected ratio to NaN.
    """
    values = curve.values
    if len(values) < 2:
        raise ValueError("curve must contain at least two points")
    rp = values[1:] / values[:-1] - 1.0
    total_return = float((values[-1] - values[0]) / values[0])
    excess = float(rp.mean() - risk_free)
    sd = float(rp.std(ddof=1)) if len(rp) > 1 else 0.0
    sharpe = excess / sd if sd > 0.0 else _degenerate_ratio(excess)
    downside = np.minimum(rp - risk_free, 0.0)
    dr = float(np.sqrt(np.mean(downside * downside)))
    sortino = excess / dr if dr > 0.0 else _degenerate_ratio(excess)
    var = empirical_var(rp, alpha)
    turnover = float(curve.turnovers.sum() / (2.0 * len(curve.turnovers)))
    return MetricsReport(total_return, sd, sharpe, sortino, var, turnover)


def write_metrics_csv(path, rows: list[tuple[str, MetricsReport]]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for name, report in rows:
            cells = [name] + [repr(float(v)) for v in report.as_row()]
            fh.write(",".join(cells) + "\n")


def write_equity_csv(path, curve: EquityCurve) -> None:
    with open(path, "w") as fh:
        fh.write("step,value\n")
        for step, value in zip(curve.steps, curve.values):
            fh.write(f"{step},{float(value)!r}\n")


# ---------------------------------------------------------------------------
# Sensitivity sweeps
# ---------------------------------------------------------------------------

SWEEPABLE = ("delta", "zeta", "seed")


def sensitivity_sweep(
    param: str,
    values: list,
    cfg: RunConfig,
    train_market: MarketData,
    eval_market: MarketData,
) -> list[tuple[object, MetricsReport]]:
    """Retrain and re-evaluate the policy for each parameter value."""
    from .learner import train  # local import; learner depends on this module

    if param not in SWEEPABLE:
        raise ValueError(f"sweep parameter must be one of {SWEEPABLE}")
    rows = []
    for value in values:
        run_cfg = dataclasses.replace(
            cfg, **{param: int(value) if param == "seed" else float(value)})
        run_cfg.validate()
        result = train(run_cfg, train_market, eval_market=None)
        curve = run_strategy(policy_strategy(result.learner.actor, run_cfg.delta),
                             eval_market, run_cfg)
        rows.append((value, metrics(curve, run_cfg.risk_free_rate, run_cfg.alpha)))
    return rows
