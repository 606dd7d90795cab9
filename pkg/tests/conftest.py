"""Shared test helpers: small panel builders and graph fixtures."""

import datetime as dt

import numpy as np
import pytest

from hgwave.market_data import OhlcvPanel
from hgwave.synthetic import weekday_calendar


def make_panel(close: np.ndarray, open_=None, high=None, low=None,
               volume=None, start=dt.date(2020, 1, 6), symbols=None,
               meta=None) -> OhlcvPanel:
    """Build an aligned panel from a (stocks, days) close matrix.

    Missing OHLV fields default to a flat bar at the close.
    """
    close = np.asarray(close, dtype=float)
    if close.ndim == 1:
        close = close[None, :]
    n, T = close.shape
    open_ = close.copy() if open_ is None else np.asarray(open_, float).reshape(n, T)
    high = np.maximum(open_, close) if high is None else np.asarray(high, float).reshape(n, T)
    low = np.minimum(open_, close) if low is None else np.asarray(low, float).reshape(n, T)
    volume = np.full((n, T), 1000.0) if volume is None else np.asarray(volume, float).reshape(n, T)
    symbols = symbols or [f"S{i:03d}" for i in range(n)]
    return OhlcvPanel(symbols=symbols, calendar=weekday_calendar(start, T),
                      open=open_, high=high, low=low, close=close,
                      volume=volume, meta=meta or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
