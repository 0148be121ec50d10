"""Portfolios from agent confidences, out-of-sample backtests and metrics.

Each agent's portfolio is its confidence vector scaled to unit L1 norm; the
ensemble portfolio is the mean of those, rescaled to unit L1 norm again.
Rebalancing is daily and frictionless: no transaction costs, slippage or
position limits.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import positional_confidence, q_values
from .market_data import MarketDataError, MarketFrame, state_matrix

TRADING_DAYS = 252
INITIAL_WEALTH = 100.0


@dataclass(frozen=True)
class PortfolioVector:
    weights: np.ndarray
    degenerate: bool = False


def _l1_normalise(x) -> PortfolioVector:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("portfolio inputs must be finite")
    total = np.sum(np.abs(x))
    if total == 0:
        return PortfolioVector(np.zeros_like(x), True)
    return PortfolioVector(x / total)


def agent_portfolio(eta) -> PortfolioVector:
    """Weights proportional to confidence, scaled so absolute weights sum to 1.

    An all-zero confidence vector yields a flagged zero portfolio.
    """
    return _l1_normalise(eta)


def aggregate_portfolio(per_agent: Sequence[PortfolioVector]) -> PortfolioVector:
    if not per_agent:
        raise ValueError("need at least one portfolio")
    W = np.vstack([p.weights for p in per_agent])
    return _l1_normalise(W.mean(axis=0))


def portfolio_return(alpha, frame: MarketFrame, t: int) -> float:
    """Percent return from day ``t`` to ``t+1`` of holding weights ``alpha``."""
    w = alpha.weights if isinstance(alpha, PortfolioVector) else np.asarray(alpha, dtype=np.float64)
    if not 0 <= t < frame.n_days - 1:
        raise IndexError(f"day {t} has no next day (T={frame.n_days})")
    if w.shape != (frame.n_companies,):
        raise ValueError(f"weights have shape {w.shape}, frame has {frame.n_companies} companies")
    p0, p1 = frame.closes[:, t], frame.closes[:, t + 1]
    return float(100.0 * np.dot((p1 - p0) / p0, w))


def sharpe_ratio(returns, rf=None) -> float:
    """Annualised Sharpe of daily percent returns over a daily risk-free rate.

    Uses the sample (n-1) standard deviation of excess returns.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("Sharpe needs at least two returns")
    ex = r - (0.0 if rf is None else np.asarray(rf, dtype=np.float64))
    if ex.shape != r.shape:
        raise ValueError("risk-free series length does not match returns")
    sd = np.std(ex, ddof=1)
    # rounding noise on a constant series is not volatility
    if sd <= 1e-12 * max(1.0, float(np.max(np.abs(ex)))):
        raise ValueError("undefined Sharpe: excess returns have zero variance")
    return float(np.sqrt(TRADING_DAYS) * np.mean(ex) / sd)


def load_risk_free(path, dates) -> np.ndarray:
    """Daily risk-free rates (percent) from a ``date,rate`` CSV, aligned to ``dates``."""
    rates = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "rate"]:
            raise MarketDataError(f"{path}:1: expected header 'date,rate'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rates[np.datetime64(row[0].strip(), "D")] = float(row[1])
            except (ValueError, IndexError) as exc:
                raise MarketDataError(f"{path}:{lineno}: cannot parse {row!r}") from exc
    out = []
    for d in np.asarray(dates, dtype="datetime64[D]"):
        if d not in rates:
            raise MarketDataError(f"{path}: no risk-free rate for {d}")
        out.append(rates[d])
    out = np.array(out)
    if not np.all(np.isfinite(out)):
        raise MarketDataError(f"{path}: non-finite risk-free rate")
    return out


def return_correlation_matrix(per_agent_returns):
    """Pearson correlation matrix of K return series and its off-diagonal mean.

    Pairs involving a zero-variance series are nan and left out of the mean.
    """
    X = np.asarray(per_agent_returns, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("need K series of equal length >= 2")
    K = X.shape[0]
    Xc = X - X.mean(axis=1, keepdims=True)
    ss = np.einsum("ij,ij->i", Xc, Xc)
    flat = ss <= 1e-20 * X.shape[1]
    C = np.full((K, K), np.nan)
    for i in range(K):
        for j in range(i, K):
            if flat[i] or flat[j]:
                continue
            C[i, j] = C[j, i] = 1.0 if i == j else (Xc[i] @ Xc[j]) / np.sqrt(ss[i] * ss[j])
    off = [C[i, j] for i, j in combinations(range(K), 2) if np.isfinite(C[i, j])]
    return C, (float(np.mean(off)) if off else float("nan"))


@dataclass(frozen=True)
class BacktestReport:
    name: str
    dates: np.ndarray  # date each return is realised
    daily_returns: np.ndarray
    wealth: np.ndarray  # length n+1, starts at 100
    agent_returns: np.ndarray  # (K, n); K = 0 for rule baselines
    degenerate: np.ndarray  # bool per day
    risk_free: np.ndarray
    annualized_return: float
    sharpe: float
    correlation: np.ndarray | None
    mean_pairwise_corr: float

    @property
    def degenerate_days(self) -> int:
        return int(np.sum(self.degenerate))

    def summary(self) -> dict:
        return {
            "strategy": self.name,
            "annualized_return": self.annualized_return,
            "sharpe": self.sharpe,
            "mean_pairwise_corr": self.mean_pairwise_corr,
            "degenerate_days": self.degenerate_days,
            "n_days": len(self.daily_returns),
        }


SUMMARY_FIELDS = ["strategy", "annualized_return", "sharpe", "mean_pairwise_corr", "degenerate_days", "n_days"]


def annualized_return(daily) -> float:
    return float(np.mean(daily) * TRADING_DAYS)


def wealth_curve(daily) -> np.ndarray:
    return INITIAL_WEALTH * np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(daily) / 100.0)])


def backtest_weights(
    frame: MarketFrame,
    start: int,
    weights_fn: Callable[[int], tuple[PortfolioVector, list[PortfolioVector]]],
    rf=None,
    name: str = "strategy",
) -> BacktestReport:
    """Generic daily backtest from day ``start`` to ``T-2``.

    ``weights_fn(t)`` returns the portfolio held over ``t -> t+1`` and the
    per-agent portfolios it was built from (empty for single-rule strategies).
    """
    T = frame.n_days
    days = range(start, T - 1)
    if len(days) < 1:
        raise ValueError(f"no tradable days from {start} in a {T}-day frame")
    daily, agents, degenerate = [], [], []
    for t in days:
        port, parts = weights_fn(t)
        daily.append(portfolio_return(port, frame, t))
        agents.append([portfolio_return(p, frame, t) for p in parts])
        degenerate.append(port.degenerate)
    daily = np.array(daily)
    agent_returns = np.array(agents, dtype=np.float64).reshape(len(daily), -1).T
    rf = np.zeros_like(daily) if rf is None else np.asarray(rf, dtype=np.float64)
    if rf.shape != daily.shape:
        raise ValueError(f"risk-free series has {rf.shape[0]} entries, expected {len(daily)}")
    try:
        sharpe = sharpe_ratio(daily, rf) if len(daily) >= 2 else float("nan")
    except ValueError:
        sharpe = float("nan")
    if agent_returns.shape[0] >= 2 and len(daily) >= 2:
        corr, mean_corr = return_correlation_matrix(agent_returns)
    else:
        corr, mean_corr = None, float("nan")
    return BacktestReport(
        name=name,
        dates=frame.dates[start + 1 : T],
        daily_returns=daily,
        wealth=wealth_curve(daily),
        agent_returns=agent_returns,
        degenerate=np.array(degenerate, dtype=bool),
        risk_free=rf,
        annualized_return=annualized_return(daily),
        sharpe=sharpe,
        correlation=corr,
        mean_pairwise_corr=mean_corr,
    )


def ensemble_confidences(agents, frame: MarketFrame, f: int, days) -> np.ndarray:
    """Eval-mode confidences, shape (K, len(days), N)."""
    days = list(days)
    X = np.stack([state_matrix(frame, t, f) for t in days])  # (D, N, f)
    flat = X.reshape(-1, f)
    out = [positional_confidence(q_values(a, flat, "online", "eval")) for a in agents]
    return np.stack(out).reshape(len(agents), len(days), frame.n_companies)


def run_backtest(agents, test_frame: MarketFrame, f: int, rf=None, name: str | None = None) -> BacktestReport:
    """Trade the ensemble portfolio on every day with a full ``f``-day window."""
    if test_frame.n_days < f + 1:
        raise ValueError(f"test frame has {test_frame.n_days} days, needs at least {f + 1}")
    start = f - 1
    eta = ensemble_confidences(agents, test_frame, f, range(start, test_frame.n_days - 1))

    def weights(t):
        parts = [agent_portfolio(eta[i, t - start]) for i in range(len(agents))]
        return aggregate_portfolio(parts), parts

    return backtest_weights(test_frame, start, weights, rf, name or f"MAPS@{len(agents)}")


def confidence_correlation_probe(agents, probe_frame: MarketFrame, f: int) -> float:
    """Mean absolute pairwise correlation of agents' confidences over all probe states."""
    if len(agents) < 2:
        raise ValueError("confidence correlation needs >= 2 agents")
    if probe_frame.n_days < f + 1:
        raise ValueError(f"probe frame has {probe_frame.n_days} days, needs at least {f + 1}")
    eta = ensemble_confidences(agents, probe_frame, f, range(f - 1, probe_frame.n_days))
    eta = eta.reshape(len(agents), -1)
    C, _ = return_correlation_matrix(eta)
    vals = [abs(C[i, j]) for i, j in combinations(range(len(agents)), 2) if np.isfinite(C[i, j])]
    return float(np.mean(vals)) if vals else float("nan")


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(x)


def write_report(report: BacktestReport, out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (one row per day) and the matching one-row summary.

    Summary file is ``summary.csv`` for the default stem, ``summary_<x>.csv``
    for ``report_<x>``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"{stem}.csv"
    summary_path = out_dir / ("summary.csv" if stem == "report" else stem.replace("report", "summary", 1) + ".csv")
    K = report.agent_returns.shape[0]
    with open(report_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "portfolio_return", "wealth", "risk_free", "degenerate"] + [f"agent_{i}" for i in range(K)])
        for k, d in enumerate(report.dates):
            w.writerow(
                [str(d), repr(float(report.daily_returns[k])), repr(float(report.wealth[k + 1])),
                 repr(float(report.risk_free[k])), int(report.degenerate[k])]
                + [repr(float(x)) for x in report.agent_returns[:, k]]
            )
    write_summary([report], summary_path)
    return report_path, summary_path


def write_summary(reports: Sequence[BacktestReport], path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for rep in reports:
            s = rep.summary()
            w.writerow([_fmt(s[k]) if isinstance(s[k], float) else s[k] for k in SUMMARY_FIELDS])
    return Path(path)
