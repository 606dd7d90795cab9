"""Synthetic OHLCV dataset generation for experiments and smoke tests."""

from __future__ import annotations

import csv
import datetime as dt

import numpy as np

INDUSTRIES = ("tech", "energy", "finance", "health", "consumer", "utilities")


def weekday_calendar(start: dt.date, n_days: int) -> list[dt.date]:
    cal = []
    day = start
    while len(cal) < n_days:
        if day.weekday() < 5:
            cal.append(day)
        day += dt.timedelta(days=1)
    return cal


def generate_ohlcv(n_stocks: int = 30, n_days: int = 756, seed: int = 0,
                   start: dt.date = dt.date(2016, 1, 4),
                   n_industries: int = 5):
    """Geometric-random-walk OHLCV panel with an industry factor.

    Returns (calendar, symbols, arrays dict, meta dict). Stocks in the
    same industry share a common return factor so correlation-based
    hyperedges have something to find.
    """
    rng = np.random.default_rng(seed)
    calendar = weekday_calendar(start, n_days)
    symbols = [f"S{i:03d}" for i in range(n_stocks)]
    industries = [INDUSTRIES[i % n_industries] for i in range(n_stocks)]

    factor = rng.normal(0, 0.01, size=(n_industries, n_days))
    idio = rng.normal(0.0002, 0.015, size=(n_stocks, n_days))
    rets = idio + 0.7 * factor[[i % n_industries for i in range(n_stocks)]]
    close = 100.0 * np.exp(np.cumsum(rets, axis=1))
    close *= rng.uniform(0.5, 2.0, size=(n_stocks, 1))

    spread = np.abs(rng.normal(0, 0.006, size=close.shape))
    open_ = close * (1 + rng.normal(0, 0.004, size=close.shape))
    high = np.maximum(open_, close) * (1 + spread)
    low = np.minimum(open_, close) * (1 - spread)
    volume = np.round(rng.lognormal(13, 0.5, size=close.shape))

    arrays = {"open": open_, "high": high, "low": low, "close": close,
              "volume": volume}
    meta = {sym: {"industry": ind,
                  "market_cap": float(rng.lognormal(24, 1))}
            for sym, ind in zip(symbols, industries)}
    return calendar, symbols, arrays, meta


def write_csvs(data_path, meta_path, calendar, symbols, arrays, meta):
    with open(data_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["date", "symbol", "open", "high", "low", "close",
                         "volume"])
        for i, sym in enumerate(symbols):
            for t, day in enumerate(calendar):
                writer.writerow([
                    day.isoformat(), sym,
                    f"{arrays['open'][i, t]:.4f}",
                    f"{arrays['high'][i, t]:.4f}",
                    f"{arrays['low'][i, t]:.4f}",
                    f"{arrays['close'][i, t]:.4f}",
                    f"{arrays['volume'][i, t]:.0f}",
                ])
    with open(meta_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["symbol", "industry", "market_cap"])
        for sym in symbols:
            writer.writerow([sym, meta[sym]["industry"],
                             f"{meta[sym]['market_cap']:.0f}"])
