"""Run configuration: defaults, file parsing, and validation.

Config files are flat ``key = value`` text; ``[section]`` headers are
allowed for readability but keys are global and must be unique. Any key
not listed in RunConfig is rejected. Unset keys take the defaults
below, which reproduce the published hyper-parameter table (window 60,
lr 1e-5, batch 32, replay 2000, 80000 updates, gamma 0.9, alpha 0.95,
kappa 1.0, delta 3.0, tau 0.5, zeta 0.5, 200 quantiles, initial money
10000, weekly risk-free 3.8e-4, transaction cost 0.0020, 2 GRU layers).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass
from datetime import date as Date

from .distribution import var_index


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    source: str = "csv"                 # csv | alternating | heavytail
    data_dir: str = "data"
    symbols: tuple[str, ...] = ()
    train_start: Date = Date(2008, 1, 1)
    train_end: Date = Date(2018, 12, 31)
    test_start: Date = Date(2019, 1, 1)
    test_end: Date = Date(2022, 12, 31)
    risk_free_rate: float = 3.8e-4
    include_risk_free: bool = True
    synthetic_weeks: int = 800

    # state
    window: int = 60

    # action map
    delta: float = 3.0

    # critic / risk
    alpha: float = 0.95
    zeta: float = 0.5
    kappa: float = 1.0
    gamma: float = 0.9
    n_quantiles: int = 200

    # networks
    gru_layers: int = 2
    hidden_size: int = 64

    # training
    learning_rate: float = 1e-5
    batch_size: int = 32
    replay_capacity: int = 2000
    replay_warmup: int = 64
    updates: int = 80_000
    tau: float = 0.5
    t_target: int = 10
    t_actor: int = 20
    sigma0: float = 0.2
    noise_decay: float = 0.9999
    noise_clip: float = 0.5
    episode_horizon: int = 52
    eval_interval: int = 1000
    checkpoint_interval: int = 10_000

    # portfolio
    initial_money: float = 10_000.0
    sell_cost: float = 0.0020
    buy_cost: float = 0.0020

    # runtime
    actors: int = 1
    seed: int = 0
    queue_bound: int = 10_000

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0,1], got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.delta < 0.0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.zeta < 0.0:
            raise ConfigError(f"zeta must be >= 0, got {self.zeta}")
        if self.kappa <= 0.0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0,1], got {self.tau}")
        for name in ("sell_cost", "buy_cost"):
            cost = getattr(self, name)
            if not 0.0 <= cost < 0.1:
                raise ConfigError(f"{name} must be in [0,0.1), got {cost}")
        try:
            var_index(self.n_quantiles, self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("window", "n_quantiles", "batch_size", "replay_capacity",
                     "gru_layers", "hidden_size", "episode_horizon",
                     "t_target", "t_actor", "actors"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.updates < 0:
            raise ConfigError(f"updates must be >= 0, got {self.updates}")
        if self.source not in ("csv", "alternating", "heavytail"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.sigma0 < 0.0 or self.noise_clip <= 0.0:
            raise ConfigError("noise scale must be >= 0 and clip > 0")
        if self.train_end < self.train_start or self.test_end < self.test_start:
            raise ConfigError("date ranges must not be inverted")
        return self

    def canonical_text(self) -> str:
        out = io.StringIO()
        for f in dataclasses.fields(self):
            out.write(f"{f.name} = {_format_value(getattr(self, f.name))}\n")
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


def _parse_value(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    kind = field.type
    try:
        if kind in ("int",):
            return int(raw)
        if kind in ("float",):
            return float(raw)
        if kind in ("bool",):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw}")
        if kind == "Date":
            return Date.fromisoformat(raw)
        if kind == "tuple[str, ...]":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{field.name}: {exc}") from None


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a config file, apply overrides, validate, and return it."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        content = fh.read()
    if not content.lstrip().startswith("["):
        content = "[run]\n" + content
    try:
        parser.read_string(content)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"{path}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}: duplicate key {key!r}")
            values[key] = _parse_value(known[key], raw)
    if overrides:
        for key, val in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown override {key!r}")
            values[key] = val
    return RunConfig(**values).validate()


def default_config() -> RunConfig:
    return RunConfig().validate()
