"""Daily closing-price panels: CSV ingestion, state windows, returns, splits
and a seeded synthetic market generator.

A :class:`MarketFrame` is an immutable N x T panel (companies x trading days).
Every cell is present and strictly positive; ragged vendor data is repaired
or trimmed at load time.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 30
DEFAULT_MAX_GAP = 5
FILL_POLICIES = ("forward", "drop")


class MarketDataError(ValueError):
    """Raised for unreadable, malformed or invalid price data."""


@dataclass(frozen=True)
class MarketFrame:
    tickers: tuple[str, ...]
    dates: np.ndarray  # datetime64[D], strictly increasing
    closes: np.ndarray  # (N, T) float64
    dropped: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        closes = np.array(self.closes, dtype=np.float64)
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        tickers = tuple(str(t) for t in self.tickers)
        if closes.ndim != 2:
            raise MarketDataError(f"closes must be 2-D, got shape {closes.shape}")
        if closes.shape != (len(tickers), len(dates)):
            raise MarketDataError(
                f"closes shape {closes.shape} does not match "
                f"{len(tickers)} tickers x {len(dates)} dates"
            )
        if closes.size == 0:
            raise MarketDataError("empty market frame")
        if len(set(tickers)) != len(tickers):
            raise MarketDataError("duplicate tickers")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise MarketDataError("closes must be finite and strictly positive")
        if len(dates) > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise MarketDataError("dates must be strictly increasing")
        closes.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "dropped", tuple(self.dropped))

    @property
    def n_companies(self) -> int:
        return self.closes.shape[0]

    @property
    def n_days(self) -> int:
        return self.closes.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MarketFrame):
            return NotImplemented
        return (
            self.tickers == other.tickers
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.closes, other.closes)
        )

    def to_csv(self, path) -> None:
        """Write the panel in the long ``date,ticker,close`` format."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "ticker", "close"])
            for c, ticker in enumerate(self.tickers):
                for t, d in enumerate(self.dates):
                    w.writerow([str(d), ticker, repr(float(self.closes[c, t]))])


@dataclass(frozen=True)
class StateWindow:
    values: np.ndarray
    company: int
    t: int


@dataclass(frozen=True)
class SplitSpec:
    """Three inclusive ``(start, end)`` date ranges."""

    train_range: tuple[str, str]
    valid_range: tuple[str, str]
    test_range: tuple[str, str]

    def ranges(self) -> list[tuple[np.datetime64, np.datetime64]]:
        out = []
        for lo, hi in (self.train_range, self.valid_range, self.test_range):
            lo, hi = np.datetime64(lo, "D"), np.datetime64(hi, "D")
            if hi < lo:
                raise MarketDataError(f"range end {hi} precedes start {lo}")
            out.append((lo, hi))
        for (_, prev_hi), (next_lo, _) in zip(out, out[1:]):
            if next_lo <= prev_hi:
                raise MarketDataError("split ranges overlap or are out of order")
        return out

    @classmethod
    def from_fractions(cls, frame: MarketFrame, fractions=(0.6, 0.2, 0.2)) -> "SplitSpec":
        """Chronological split of ``frame``'s dates by fraction of days."""
        fr = np.asarray(fractions, dtype=float)
        if fr.shape != (3,) or np.any(fr <= 0):
            raise MarketDataError("need three positive split fractions")
        T = frame.n_days
        edges = np.round(np.cumsum(fr / fr.sum()) * T).astype(int)
        starts = [0, edges[0], edges[1]]
        ends = [edges[0] - 1, edges[1] - 1, T - 1]
        d = [str(x) for x in frame.dates]
        if any(e < s for s, e in zip(starts, ends)):
            raise MarketDataError("split fractions leave an empty range")
        return cls(*((d[s], d[e]) for s, e in zip(starts, ends)))


def load_prices(path, fill_policy: str = "forward", max_gap: int = DEFAULT_MAX_GAP) -> MarketFrame:
    """Read a long-format ``date,ticker,close`` CSV into a complete panel.

    Rows may come in any order. Under ``fill_policy="forward"`` interior gaps
    of at most ``max_gap`` consecutive days are filled with the previous close;
    companies with longer gaps, or with no close on the first date, are
    dropped. ``"drop"`` removes every company with any missing day. Dropped
    tickers are logged and recorded on ``frame.dropped``.
    """
    if fill_policy not in FILL_POLICIES:
        raise MarketDataError(f"unknown fill policy {fill_policy!r}")
    path = Path(path)
    if not path.is_file():
        raise MarketDataError(f"price file not found: {path}")

    obs: dict[str, dict[np.datetime64, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "ticker", "close"]:
            raise MarketDataError(f"{path}:1: expected header 'date,ticker,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise MarketDataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            date_s, ticker, close_s = (cell.strip() for cell in row)
            try:
                date = np.datetime64(date_s, "D")
                close = float(close_s)
            except ValueError as exc:
                raise MarketDataError(f"{path}:{lineno}: cannot parse row {row!r}") from exc
            if not ticker:
                raise MarketDataError(f"{path}:{lineno}: empty ticker")
            if not np.isfinite(close) or close <= 0:
                raise MarketDataError(f"{path}:{lineno}: close must be positive, got {close_s}")
            series = obs.setdefault(ticker, {})
            if date in series:
                raise MarketDataError(f"{path}:{lineno}: duplicate row for {ticker} on {date}")
            series[date] = close

    if not obs:
        raise MarketDataError(f"{path}: no price rows")
    dates = np.array(sorted({d for s in obs.values() for d in s}), dtype="datetime64[D]")
    pos = {d: k for k, d in enumerate(dates)}

    kept, rows, dropped = [], [], []
    for ticker in sorted(obs):
        row = np.full(len(dates), np.nan)
        for d, v in obs[ticker].items():
            row[pos[d]] = v
        filled = _fill_row(row, fill_policy, max_gap)
        if filled is None:
            dropped.append(ticker)
            continue
        kept.append(ticker)
        rows.append(filled)

    if dropped:
        log.warning("dropped %d companies with unrepairable gaps: %s", len(dropped), ", ".join(dropped))
    if not kept:
        raise MarketDataError(f"{path}: no company survived the {fill_policy!r} fill policy")
    return MarketFrame(tuple(kept), dates, np.vstack(rows), dropped=tuple(dropped))


def _fill_row(row: np.ndarray, policy: str, max_gap: int):
    missing = np.isnan(row)
    if not missing.any():
        return row
    if policy == "drop" or missing[0]:
        return None
    # longest run of consecutive missing days
    run = longest = 0
    for m in missing:
        run = run + 1 if m else 0
        longest = max(longest, run)
    if longest > max_gap:
        return None
    idx = np.where(missing, 0, np.arange(len(row)))
    np.maximum.accumulate(idx, out=idx)
    return row[idx]


def make_state(frame: MarketFrame, c: int, t: int, f: int = DEFAULT_WINDOW) -> StateWindow:
    """Closes of company ``c`` over days ``t-f+1 .. t``, rebased so the first is 0."""
    if f < 2:
        raise ValueError(f"window length must be >= 2, got {f}")
    if t < f - 1 or t >= frame.n_days:
        raise IndexError(f"window of length {f} ending at day {t} does not fit in {frame.n_days} days")
    if not 0 <= c < frame.n_companies:
        raise IndexError(f"company index {c} out of range")
    p = frame.closes[c, t - f + 1 : t + 1]
    return StateWindow(p / p[0] - 1.0, c, t)


def state_matrix(frame: MarketFrame, t: int, f: int = DEFAULT_WINDOW) -> np.ndarray:
    """Rebased windows ending at day ``t`` for every company, shape (N, f)."""
    if f < 2:
        raise ValueError(f"window length must be >= 2, got {f}")
    if t < f - 1 or t >= frame.n_days:
        raise IndexError(f"window of length {f} ending at day {t} does not fit in {frame.n_days} days")
    p = frame.closes[:, t - f + 1 : t + 1]
    return p / p[:, :1] - 1.0


def daily_return_pct(frame: MarketFrame, c: int, t: int) -> float:
    """Percent return of company ``c`` from day ``t`` to ``t+1``."""
    if not 0 <= t < frame.n_days - 1:
        raise IndexError(f"day {t} has no next day (T={frame.n_days})")
    p0, p1 = frame.closes[c, t], frame.closes[c, t + 1]
    return 100.0 * (p1 - p0) / p0


def split(frame: MarketFrame, spec: SplitSpec, f: int = DEFAULT_WINDOW):
    """Partition ``frame`` by date into train/validation/test frames.

    Each range must contain at least ``f + 1`` trading days so one full
    transition fits.
    """
    out = []
    for name, (lo, hi) in zip(("train", "valid", "test"), spec.ranges()):
        mask = (frame.dates >= lo) & (frame.dates <= hi)
        n = int(mask.sum())
        if n == 0:
            raise MarketDataError(f"{name} range {lo}..{hi} is empty")
        if n < f + 1:
            raise MarketDataError(f"{name} range has {n} days, needs at least {f + 1}")
        out.append(MarketFrame(frame.tickers, frame.dates[mask], frame.closes[:, mask]))
    return tuple(out)


def synth_market(
    n_companies: int,
    n_days: int,
    regimes: Sequence[tuple[float, float, int]],
    seed: int = 0,
    p0=100.0,
    start: str = "2000-01-03",
) -> MarketFrame:
    """Geometric random-walk panel with piecewise-constant drift/volatility.

    ``regimes`` is a list of ``(drift, volatility, length)``; lengths must sum
    to ``n_days``. Day ``k`` (k >= 1) gets log-return ``drift + volatility * z``
    with ``z ~ N(0, 1)`` drawn independently per company, using the regime that
    covers day ``k``. Day 0 sits at ``p0``. Business-day dates start at ``start``.
    """
    if n_companies < 1 or n_days < 1:
        raise ValueError("need at least one company and one day")
    lengths = [int(r[2]) for r in regimes]
    if any(n < 0 for n in lengths) or sum(lengths) != n_days:
        raise ValueError(f"regime lengths {lengths} must be non-negative and sum to n_days={n_days}")
    if any(r[1] < 0 for r in regimes):
        raise ValueError("volatility must be non-negative")
    drift = np.repeat([float(r[0]) for r in regimes], lengths)
    vol = np.repeat([float(r[1]) for r in regimes], lengths)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_companies, n_days))
    steps = drift + vol * z
    steps[:, 0] = 0.0
    base = np.broadcast_to(np.asarray(p0, dtype=np.float64), (n_companies,))
    closes = base[:, None] * np.exp(np.cumsum(steps, axis=1))

    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    width = len(str(n_companies - 1))
    tickers = tuple(f"SYN{c:0{width}d}" for c in range(n_companies))
    return MarketFrame(tickers, dates, closes)
