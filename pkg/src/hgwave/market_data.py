"""OHLCV loading, alignment, labels, and rolling backtest phases."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    CalendarTooShort,
    EmptyPanel,
    MissingColumn,
    NonPositivePrice,
    ZeroPrice,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "symbol", "open", "high", "low", "close", "volume")

# maximum fraction of calendar days a symbol may be missing before exclusion
MAX_MISSING_FRACTION = 0.20


@dataclass
class OhlcvBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise NonPositivePrice(f"non-positive price on {self.date}")
        if self.volume < 0:
            raise NonPositivePrice(f"negative volume on {self.date}")


@dataclass
class OhlcvPanel:
    """Per-stock OHLCV series aligned to one shared trading calendar.

    Price/volume fields are (n_symbols, n_days) arrays. `meta` maps a
    symbol to its industry label and market-capital value (may be None).
    """

    symbols: list[str]
    calendar: list[dt.date]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    meta: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    def day_index(self, date: dt.date) -> int:
        return self.calendar.index(date)


@dataclass
class PhaseSplit:
    """Contiguous train/valid/test day-index ranges (half-open)."""

    phase_id: int
    train: tuple[int, int]
    valid: tuple[int, int]
    test: tuple[int, int]
    start_date: dt.date | None = None


@dataclass
class PhaseConfig:
    """Rolling-phase layout. Month arithmetic runs on calendar dates;
    the stride is calendar days between consecutive phase starts."""

    train_months: int = 10
    valid_months: int = 2
    test_months: int = 6
    stride_days: int = 163
    max_phases: int | None = None


@dataclass
class LabelTensor:
    """Relative close-price change over a fixed lookahead window.

    values[s, t] = (c_{t+w} - c_t) / c_t, NaN where t + w exceeds the
    calendar.
    """

    values: np.ndarray
    lookahead: int


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_ohlcv(path, universe: list[str] | None = None,
               meta_path=None) -> OhlcvPanel:
    """Load a CSV of `date,symbol,open,high,low,close,volume` rows.

    Rows are sorted by date; interior gaps are forward-filled from the
    previous bar with volume 0. Symbols missing more than 20% of
    calendar days are dropped with a warning record.
    """
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}")
        rows: dict[str, dict[dt.date, OhlcvBar]] = {}
        for raw in reader:
            raw = {k.strip().lower(): v for k, v in raw.items() if k}
            sym = raw["symbol"].strip()
            if universe is not None and sym not in universe:
                continue
            bar = OhlcvBar(
                date=_parse_date(raw["date"]),
                open=float(raw["open"]),
                high=float(raw["high"]),
                low=float(raw["low"]),
                close=float(raw["close"]),
                volume=float(raw["volume"]),
            )
            bar.validate()
            rows.setdefault(sym, {})[bar.date] = bar

    if not rows:
        raise EmptyPanel("no usable rows in input")

    calendar = sorted({d for bars in rows.values() for d in bars})
    warnings: list[str] = []
    kept: list[str] = []
    for sym in sorted(rows):
        missing_days = sum(1 for d in calendar if d not in rows[sym])
        if missing_days > MAX_MISSING_FRACTION * len(calendar):
            msg = f"{sym}: missing {missing_days}/{len(calendar)} days, excluded"
            warnings.append(msg)
            logger.warning(msg)
        else:
            kept.append(sym)
    if not kept:
        raise EmptyPanel("all symbols excluded by missing-data policy")

    n, T = len(kept), len(calendar)
    arrays = {k: np.full((n, T), np.nan) for k in
              ("open", "high", "low", "close", "volume")}
    for i, sym in enumerate(kept):
        prev: OhlcvBar | None = None
        for t, day in enumerate(calendar):
            bar = rows[sym].get(day)
            if bar is None and prev is not None:
                # forward-fill: hold the last close flat, volume 0
                bar = OhlcvBar(day, prev.close, prev.close, prev.close,
                               prev.close, 0.0)
            if bar is not None:
                arrays["open"][i, t] = bar.open
                arrays["high"][i, t] = bar.high
                arrays["low"][i, t] = bar.low
                arrays["close"][i, t] = bar.close
                arrays["volume"][i, t] = bar.volume
                prev = bar

    meta = load_meta(meta_path) if meta_path else {}
    return OhlcvPanel(symbols=kept, calendar=calendar, meta=meta,
                      warnings=warnings, **arrays)


def load_meta(path) -> dict[str, dict]:
    """Load `symbol,industry,market_cap` metadata."""
    meta: dict[str, dict] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
        for col in ("symbol", "industry"):
            if col not in header:
                raise MissingColumn(f"metadata missing column: {col}")
        for raw in reader:
            raw = {k.strip().lower(): v for k, v in raw.items() if k}
            cap = raw.get("market_cap", "")
            meta[raw["symbol"].strip()] = {
                "industry": raw["industry"].strip(),
                "market_cap": float(cap) if cap not in ("", None) else None,
            }
    return meta


def compute_labels(panel: OhlcvPanel, w: int = 5) -> LabelTensor:
    """Relative close-price change (c_{t+w} - c_t) / c_t per stock/day."""
    if w < 1:
        raise ValueError("lookahead must be >= 1")
    if panel.n_days == 0 or panel.n_symbols == 0:
        raise EmptyPanel("cannot label an empty panel")
    c = panel.close
    if np.any(c == 0):
        raise ZeroPrice("zero close price in panel")
    values = np.full_like(c, np.nan)
    if panel.n_days > w:
        values[:, :-w] = (c[:, w:] - c[:, :-w]) / c[:, :-w]
    return LabelTensor(values=values, lookahead=w)


def _add_months(day: dt.date, months: int) -> dt.date:
    return (pd.Timestamp(day) + pd.DateOffset(months=months)).date()


def make_rolling_phases(calendar: list[dt.date],
                        cfg: PhaseConfig | None = None) -> list[PhaseSplit]:
    """Slice the calendar into rolling train/valid/test phases.

    Phase k starts `k * stride_days` calendar days after the first
    trading day; train/valid/test durations are calendar months mapped
    back to trading-day index ranges. The final phase's test range is
    truncated at the calendar end; phases with no test day are dropped.
    """
    cfg = cfg or PhaseConfig()
    if not calendar:
        raise CalendarTooShort("empty calendar")
    days = np.array([d.toordinal() for d in calendar])
    start0 = calendar[0]
    phases: list[PhaseSplit] = []
    k = 0
    while True:
        if cfg.max_phases is not None and len(phases) >= cfg.max_phases:
            break
        start = start0 + dt.timedelta(days=k * cfg.stride_days)
        if start > calendar[-1]:
            break
        valid_start = _add_months(start, cfg.train_months)
        test_start = _add_months(valid_start, cfg.valid_months)
        test_end = _add_months(test_start, cfg.test_months)
        i0 = int(np.searchsorted(days, start.toordinal()))
        i1 = int(np.searchsorted(days, valid_start.toordinal()))
        i2 = int(np.searchsorted(days, test_start.toordinal()))
        i3 = int(np.searchsorted(days, test_end.toordinal()))
        k += 1
        if i2 >= len(calendar):
            break  # no test data left; later starts only get worse
        if i1 <= i0 or i2 <= i1 or i3 <= i2:
            continue
        phases.append(PhaseSplit(phase_id=len(phases) + 1,
                                 train=(i0, i1), valid=(i1, i2),
                                 test=(i2, i3), start_date=start))
    if not phases:
        raise CalendarTooShort(
            f"calendar of {len(calendar)} days fits no complete phase")
    return phases


def normalize_features(features: np.ndarray, window: int) -> np.ndarray:
    """Causal z-score per stock and channel over a trailing window.

    features: (stocks, days, channels). Each value is standardized by
    the mean/stddev of the `window` days ending at (and including) the
    current day; near-zero stddev maps the value to 0. NaN inputs stay
    NaN.
    """
    if window < 2:
        raise ValueError("normalization window must be >= 2")
    n, T, C = features.shape
    out = np.full_like(features, np.nan)
    # straightforward trailing-window loop; panels are small enough
    for t in range(T):
        lo = max(0, t - window + 1)
        win = features[:, lo:t + 1, :]
        mu = win.mean(axis=1)
        sd = win.std(axis=1)
        val = features[:, t, :]
        z = np.where(sd < 1e-12, 0.0, (val - mu) / np.where(sd < 1e-12, 1.0, sd))
        out[:, t, :] = np.where(np.isnan(val) | np.isnan(mu), np.nan, z)
    return out
