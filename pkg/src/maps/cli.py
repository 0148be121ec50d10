"""Command line for training, backtesting and comparing agent ensembles.

    maps synth    --config CFG   write the synthetic panel to <out>/prices.csv
    maps train    --config CFG   train an ensemble, write checkpoint + logs
    maps backtest --checkpoint DIR --config CFG
    maps compare  --config CFG [--checkpoint DIR] [--discrete]
                                 ensemble vs. enabled baselines -> compare.csv

Global flags ``--seed`` and ``--out`` override the config. Exit codes: 0 ok,
2 bad config or input, 3 numeric failure during training.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agents import load_ensemble, make_ensemble, save_ensemble
from .backtest import load_risk_free, run_backtest, write_report, write_summary
from .baselines import baseline_start, run_baseline
from .config import RunConfig, load_config
from .market_data import MarketFrame, SplitSpec, load_prices, split, synth_market
from .neural import CheckpointError
from .training import train

log = logging.getLogger("maps")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def synthesize(cfg: RunConfig) -> MarketFrame:
    return synth_market(cfg.synth_companies, cfg.synth_days, cfg.synth_regimes, seed=cfg.seed)


def market(cfg: RunConfig) -> MarketFrame:
    if cfg.data:
        return load_prices(cfg.data, cfg.fill_policy, cfg.max_gap)
    return synthesize(cfg)


def splits(cfg: RunConfig):
    frame = market(cfg)
    spec = cfg.split or SplitSpec.from_fractions(frame, cfg.split_fractions)
    return split(frame, spec, cfg.window)


def cmd_synth(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    synthesize(cfg).to_csv(out / "prices.csv")
    log.info("wrote %s", out / "prices.csv")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    train_frame, valid_frame, _ = splits(cfg)
    agents = make_ensemble(cfg.agents, cfg.window, cfg.seed, cfg.base_sizes)
    run_log = train(agents, train_frame, cfg.train, probe_frame=valid_frame)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_ensemble(agents, cfg.checkpoint_dir, run_log.iterations, seed=cfg.seed)
    run_log.to_csv(out / "train_log.csv")
    run_log.probe_to_csv(out / "probe.csv")
    log.info("trained %d agents for %d iterations -> %s", len(agents), run_log.iterations, cfg.checkpoint_dir)
    return EXIT_OK


def _load_checked(cfg: RunConfig, checkpoint):
    agents, manifest = load_ensemble(checkpoint)
    if manifest["K"] != cfg.agents or manifest["f"] != cfg.window:
        raise CheckpointError(
            f"checkpoint has K={manifest['K']}, f={manifest['f']}; config expects K={cfg.agents}, f={cfg.window}"
        )
    return agents


def _risk_free(cfg: RunConfig, frame: MarketFrame, start: int):
    if not cfg.risk_free:
        return None
    return load_risk_free(cfg.risk_free, frame.dates[start + 1 :])


def cmd_backtest(cfg: RunConfig, checkpoint) -> int:
    agents = _load_checked(cfg, checkpoint)
    _, _, test = splits(cfg)
    report = run_backtest(agents, test, cfg.window, _risk_free(cfg, test, cfg.window - 1))
    write_report(report, cfg.out)
    log.info("%s: return %.3f, Sharpe %.3f", report.name, report.annualized_return, report.sharpe)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, checkpoint) -> int:
    agents = _load_checked(cfg, checkpoint)
    _, _, test = splits(cfg)
    start = cfg.window - 1
    reports = [run_backtest(agents, test, cfg.window, _risk_free(cfg, test, start))]
    for kind in cfg.baselines:
        # baselines trade the same days as the ensemble when their lookback allows
        first = baseline_start(kind, start)
        rep = run_baseline(kind, test, start, _risk_free(cfg, test, first), cfg.discrete_baselines)
        write_report(rep, cfg.out, f"report_{kind.lower()}")
        reports.append(rep)
    write_report(reports[0], cfg.out)
    write_summary(reports, Path(cfg.out) / "compare.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="maps", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic price panel")
    sub.add_parser("train", parents=[common], help="train an agent ensemble")
    bt = sub.add_parser("backtest", parents=[common], help="backtest a trained ensemble")
    bt.add_argument("--checkpoint", required=True)
    cmp_ = sub.add_parser("compare", parents=[common], help="compare ensemble and baselines")
    cmp_.add_argument("--checkpoint", default=None)
    cmp_.add_argument("--discrete", action="store_true", help="sign-only baseline positions")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.out)
        if getattr(args, "discrete", False):
            cfg = replace(cfg, discrete_baselines=True)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        checkpoint = getattr(args, "checkpoint", None) or cfg.checkpoint_dir
        if args.command == "backtest":
            return cmd_backtest(cfg, checkpoint)
        return cmd_compare(cfg, checkpoint)
    except ArithmeticError as exc:
        print(f"maps: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"maps: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
