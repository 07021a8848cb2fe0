"""Risk-return distributional actor-critic portfolio trading (R3L).

A quantile-regression critic learns the distribution of cumulative
portfolio returns; the actor maximizes mean-minus-VaR utility over it.
Weights come from a softmax plus linear transform that permits bounded
short selling under the self-financing budget, training runs either
single-process or with concurrent acting workers, and a backtest bench
evaluates the result against classical strategies under proportional
transaction costs.
"""

__version__ = "0.1.0"

from .actions import action_to_weights, delta_transform, softmax, weight_bounds
from .config import RunConfig, default_config, parse_config
from .data import AssetSeries, Bar, State, build_state, load_ohlcv, resample_weekly
from .distribution import (
    RiskConfig,
    bellman_target,
    mean_return,
    quantile_huber_loss,
    utility,
    var_alpha,
)
from .learner import ExplorationSchedule, ReplayBuffer, train
from .portfolio import PortfolioEnv, PortfolioState, Transition, grow, rebalance, reward
from .runtime import run_distributed

__all__ = [
    "AssetSeries",
    "Bar",
    "ExplorationSchedule",
    "PortfolioEnv",
    "PortfolioState",
    "ReplayBuffer",
    "RiskConfig",
    "RunConfig",
    "State",
    "Transition",
    "action_to_weights",
    "bellman_target",
    "build_state",
    "default_config",
    "delta_transform",
    "grow",
    "load_ohlcv",
    "mean_return",
    "parse_config",
    "quantile_huber_loss",
    "rebalance",
    "resample_weekly",
    "reward",
    "run_distributed",
    "softmax",
    "train",
    "utility",
    "var_alpha",
]
