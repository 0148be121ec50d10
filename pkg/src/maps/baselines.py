"""Momentum and mean-reversion rule strategies.

Signals are turned into weights with the same L1 rule the agents use, so
baseline and ensemble backtests are directly comparable. ``discrete=True``
replaces each signal by its sign first (equal-weight long/short book).
"""
from __future__ import annotations

import numpy as np

from .backtest import BacktestReport, PortfolioVector, agent_portfolio, backtest_weights
from .market_data import MarketFrame

MOM_LOOKBACK = 10
MR_LOOKBACK = 30


def momentum_signal(frame: MarketFrame, c: int, t: int, lookback: int = MOM_LOOKBACK) -> float:
    """Fractional price change over the last ``lookback`` days."""
    if t < lookback or t >= frame.n_days:
        raise IndexError(f"momentum needs day >= {lookback}, got {t}")
    p = frame.closes[c]
    return float((p[t] - p[t - lookback]) / p[t - lookback])


def mean_reversion_signal(frame: MarketFrame, c: int, t: int, lookback: int = MR_LOOKBACK) -> float:
    """Relative distance of the price below its ``lookback``-day moving average."""
    if t < lookback - 1 or t >= frame.n_days:
        raise IndexError(f"mean reversion needs day >= {lookback - 1}, got {t}")
    p = frame.closes[c]
    ma = p[t - lookback + 1 : t + 1].mean()
    return float((ma - p[t]) / ma)


def momentum_signals(frame: MarketFrame, t: int, lookback: int = MOM_LOOKBACK) -> np.ndarray:
    return np.array([momentum_signal(frame, c, t, lookback) for c in range(frame.n_companies)])


def mean_reversion_signals(frame: MarketFrame, t: int, lookback: int = MR_LOOKBACK) -> np.ndarray:
    return np.array([mean_reversion_signal(frame, c, t, lookback) for c in range(frame.n_companies)])


def signals_to_portfolio(signals, discrete: bool = False) -> PortfolioVector:
    s = np.asarray(signals, dtype=np.float64)
    return agent_portfolio(np.sign(s) if discrete else s)


BASELINES = {
    "MOM": (momentum_signals, MOM_LOOKBACK),
    "MR": (mean_reversion_signals, MR_LOOKBACK),
}


def baseline_start(kind: str, start: int | None = None, lookback: int | None = None) -> int:
    """First day a baseline can trade, no earlier than ``start``."""
    kind = kind.upper()
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; choose from {sorted(BASELINES)}")
    lb = BASELINES[kind][1] if lookback is None else lookback
    first = lb if kind == "MOM" else lb - 1
    return first if start is None else max(start, first)


def run_baseline(kind: str, frame: MarketFrame, start: int | None = None, rf=None,
                 discrete: bool = False, lookback: int | None = None) -> BacktestReport:
    """Backtest a rule baseline (``"MOM"`` or ``"MR"``).

    ``start`` aligns the first trading day with another backtest; it is raised
    to the first day the signal is defined.
    """
    kind = kind.upper()
    fn, default_lb = BASELINES[kind] if kind in BASELINES else (None, None)
    lb = default_lb if lookback is None else lookback
    start = baseline_start(kind, start, lb)

    def weights(t):
        return signals_to_portfolio(fn(frame, t, lb), discrete), []

    return backtest_weights(frame, start, weights, rf, kind)
