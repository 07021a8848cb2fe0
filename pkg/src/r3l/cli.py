"""Command-line entry points: train, backtest, sweep, gradcheck, oracle."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from . import backtest as bench
from .config import ConfigError, RunConfig, default_config, parse_config
from .data import (
    DataError,
    MarketData,
    align_series,
    assemble_market,
    load_ohlcv,
    make_risk_free,
    resample_weekly,
    slice_series,
)
from .learner import train
from .nn import ActorNetwork, load_checkpoint
from .oracles import run_all_oracles, run_gradcheck
from .runtime import run_distributed
from .synthetic import alternating_market, heavy_tail_market

SYNTHETIC_MARKET_SEED = 20150105  # market data stays fixed across policy seeds


def load_markets(cfg: RunConfig) -> tuple[MarketData, MarketData]:
    """Build the aligned weekly train/test panels for the configured source.

    The test panel keeps window-1 bars of leading history so the first
    test decision sees a full feature window.
    """
    if cfg.source == "csv":
        series = _load_csv_series(cfg)
        full = assemble_market(series)
        test_first = next(
            (i for i, d in enumerate(full.dates) if d >= cfg.test_start), None)
        if test_first is None:
            raise DataError("no bars at or after test_start")
        train_series = [slice_series(s, cfg.train_start, cfg.train_end) for s in series]
        lead = max(0, test_first - (cfg.window - 1))
        test_series = [
            type(s)(s.symbol, s.bars[lead:][: _count_until(s, cfg.test_end, lead)])
            for s in series
        ]
        return assemble_market(train_series), assemble_market(test_series)

    weeks = cfg.synthetic_weeks
    if cfg.source == "alternating":
        market = alternating_market(weeks)
    else:
        market = heavy_tail_market(weeks, SYNTHETIC_MARKET_SEED)
    split = max(cfg.window + cfg.episode_horizon + 2, (2 * weeks) // 3)
    if split + cfg.window >= weeks:
        raise ConfigError("synthetic_weeks too small for a train/test split")
    train_market = _slice_market(market, 0, split)
    test_market = _slice_market(market, split - (cfg.window - 1), weeks)
    return train_market, test_market


def _count_until(series, end_date, lead):
    return sum(1 for b in series.bars[lead:] if b.date <= end_date)


def _slice_market(market: MarketData, lo: int, hi: int) -> MarketData:
    return MarketData(
        symbols=list(market.symbols),
        dates=market.dates[lo:hi],
        features=market.features[:, :, lo:hi].copy(),
        closes=market.closes[lo:hi].copy(),
    )


def _load_csv_series(cfg: RunConfig):
    if cfg.symbols:
        paths = [os.path.join(cfg.data_dir, f"{sym}.csv") for sym in cfg.symbols]
    else:
        names = sorted(f for f in os.listdir(cfg.data_dir) if f.endswith(".csv"))
        if not names:
            raise DataError(f"no CSV files in {cfg.data_dir}")
        paths = [os.path.join(cfg.data_dir, n) for n in names]
    weekly = [resample_weekly(load_ohlcv(p)) for p in paths]
    aligned = align_series(weekly)
    if cfg.include_risk_free:
        dates = aligned[0].dates()
        aligned = aligned + [make_risk_free(dates, cfg.risk_free_rate)]
    return aligned


def write_manifest(out_dir, cfg: RunConfig) -> None:
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(f"config_sha256 = {cfg.digest()}\n")
        fh.write(f"seed = {cfg.seed}\n")
        fh.write(f"actors = {cfg.actors}\n")
        fh.write(f"version = {__version__}\n")


def _resolve_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else default_config()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "actors", None) is not None:
        overrides["actors"] = args.actors
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides).validate()
    return cfg


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    train_market, test_market = load_markets(cfg)
    write_manifest(out_dir, cfg)
    if cfg.actors > 1:
        result = run_distributed(cfg, train_market, test_market, out_dir)
    else:
        result = train(cfg, train_market, test_market, out_dir)
    print(f"trained {cfg.updates} updates; transitions seen: {result.transitions_seen}")
    print(f"artifacts in {out_dir}")
    return 0


def _policy_from_checkpoint(path, cfg: RunConfig, market: MarketData) -> ActorNetwork:
    from .data import N_FEATURES

    arrays = load_checkpoint(path)
    actor = ActorNetwork.create(
        np.random.default_rng(0), market.n_assets * N_FEATURES,
        cfg.hidden_size, cfg.gru_layers, market.n_assets)
    actor.load_arrays({k: v for k, v in arrays.items() if k.startswith("actor.")})
    actor.set_requires_grad(False)
    return actor


def _cmd_backtest(args) -> int:
    cfg = _resolve_config(args)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    _, test_market = load_markets(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])

    strategies: list[tuple[str, bench.Strategy]] = [
        ("bh", bench.buy_and_hold()),
        ("sh", bench.sell_and_hold()),
        ("rn", bench.random_strategy(rng, cfg.delta)),
        ("mv", bench.mean_variance_strategy(cfg.zeta)),
    ]
    if args.checkpoint:
        actor = _policy_from_checkpoint(args.checkpoint, cfg, test_market)
        strategies.append(("r3l", bench.policy_strategy(actor, cfg.delta)))
    else:
        print("no checkpoint given: benchmarks-only report", file=sys.stderr)

    rows = []
    for name, strategy in strategies:
        curve = bench.run_strategy(strategy, test_market, cfg)
        bench.write_equity_csv(os.path.join(out_dir, f"equity_{name}.csv"), curve)
        rows.append((name, bench.metrics(curve, cfg.risk_free_rate, cfg.alpha)))
    bench.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    write_manifest(out_dir, cfg)
    for name, report in rows:
        print(f"{name}: TR={report.total_return:.4f} SR1={report.sharpe:.4f} "
              f"VaR={report.value_at_risk:.4f} AT={report.turnover:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    train_market, test_market = load_markets(cfg)
    rows = bench.sensitivity_sweep(args.param, values, cfg, train_market, test_market)
    path = os.path.join(out_dir, f"sweep_{args.param}.csv")
    with open(path, "w") as fh:
        fh.write(",".join((args.param,) + bench.METRICS_COLUMNS[1:]) + "\n")
        for value, report in rows:
            fh.write(",".join([str(value)] + [repr(float(v)) for v in report.as_row()]) + "\n")
    write_manifest(out_dir, cfg)
    print(f"sweep table written to {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed if args.seed is not None else 0)
    for name, worst in results:
        print(f"gradcheck {name}: ok (worst scaled err {worst:.3e})")
    print(f"{len(results)} gradient checks passed")
    return 0


def _cmd_oracle(args) -> int:
    lines = run_all_oracles(seed=args.seed if args.seed is not None else 0)
    for line in lines:
        print(f"oracle {line}")
    print("all oracle validators passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="r3l",
        description="Risk-return distributional actor-critic portfolio trader")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=True):
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--seed", type=int, help="master seed override")
        if out_dir:
            p.add_argument("--out-dir", default="out", help="artifact directory")

    p_train = sub.add_parser("train", help="train a policy")
    common(p_train)
    p_train.add_argument("--actors", type=int, help="concurrent acting workers")
    p_train.set_defaults(func=_cmd_train)

    p_back = sub.add_parser("backtest", help="evaluate benchmarks and a checkpoint")
    common(p_back)
    p_back.add_argument("--checkpoint", help="trained checkpoint to evaluate")
    p_back.set_defaults(func=_cmd_backtest)

    p_sweep = sub.add_parser("sweep", help="sensitivity sweep over delta/zeta/seed")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=bench.SWEEPABLE)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--seed", type=int)
    p_grad.set_defaults(func=_cmd_gradcheck)

    p_oracle = sub.add_parser("oracle", help="brute-force validators")
    p_oracle.add_argument("--seed", type=int)
    p_oracle.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
