"""Technical indicators over OHLCV panels and feature-tensor assembly.

All indicators are causal: the value at day t depends only on bars up to
and including t. Warm-up days where an indicator is undefined are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroPrice
from .market_data import OhlcvPanel


@dataclass
class IndicatorConfig:
    ma_windows: tuple[int, ...] = (5, 10, 20)      # SMA/EMA/close-ratio spans
    rsi_window: int = 14
    adx_window: int = 14
    atr_window: int = 14
    stochastic_window: int = 14
    mfi_window: int = 14
    bollinger_window: int = 20
    bollinger_m: float = 2.0
    macd_short: int = 12
    macd_long: int = 26
    include_raw_ohlcv: bool = True

    def __post_init__(self):
        if self.macd_short >= self.macd_long:
            raise ValueError("MACD short period must be < long period")
        for w in (*self.ma_windows, self.rsi_window, self.adx_window,
                  self.atr_window, self.stochastic_window, self.mfi_window,
                  self.bollinger_window):
            if w < 1:
                raise ValueError("indicator windows must be >= 1")


@dataclass
class FeatureVectorSpec:
    """Fixed, recorded channel ordering of the assembled feature vector."""

    channels: list[str] = field(default_factory=list)

    def index(self, name: str) -> int:
        return self.channels.index(name)


# ----------------------------------------------------------------------
# moving averages
# ----------------------------------------------------------------------

def sma(series: np.ndarray, n: int) -> np.ndarray:
    """Simple moving average of the last n values; NaN during warm-up."""
    out = np.full_like(series, np.nan, dtype=np.float64)
    if len(series) >= n:
        c = np.cumsum(np.insert(series.astype(np.float64), 0, 0.0))
        out[n - 1:] = (c[n:] - c[:-n]) / n
    return out


def ema(series: np.ndarray, n: int) -> np.ndarray:
    """Exponential moving average, k = 2/(n+1), seeded with the first value."""
    k = 2.0 / (n + 1)
    out = np.empty_like(series, dtype=np.float64)
    out[0] = series[0]
    for t in range(1, len(series)):
        out[t] = series[t] * k + out[t - 1] * (1 - k)
    return out


def moving_averages(series: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return sma(series, n), ema(series, n)


# ----------------------------------------------------------------------
# price ratios
# ----------------------------------------------------------------------

def price_ratios(o, h, l, c, n: int):
    """Arithmetic ratios O/C, H/C, L/C and close ratios C/min, C/max over a
    trailing window of n+1 closes (current day included)."""
    if np.any(c <= 0):
        raise ZeroPrice("close must be positive for ratio indicators")
    ar_o, ar_h, ar_l = o / c, h / c, l / c
    T = len(c)
    rc_min = np.full(T, np.nan)
    rc_max = np.full(T, np.nan)
    for t in range(T):
        lo = max(0, t - n)
        win = c[lo:t + 1]
        rc_min[t] = c[t] / win.min()
        rc_max[t] = c[t] / win.max()
    return ar_o, ar_h, ar_l, rc_min, rc_max


# ----------------------------------------------------------------------
# oscillators
# ----------------------------------------------------------------------

def rsi(close: np.ndarray, n: int) -> np.ndarray:
    """Wilder RSI: smoothed-average gain/loss recurrences seeded with the
    simple averages of the first n gains/losses."""
    T = len(close)
    out = np.full(T, np.nan)
    if T <= n:
        return out
    diff = np.diff(close)
    gain = np.where(diff > 0, diff, 0.0)
    loss = np.where(diff > 0, 0.0, -diff)
    avg_gain = gain[:n].mean()
    avg_loss = loss[:n].mean()
    out[n] = _rsi_value(avg_gain, avg_loss)
    for t in range(n + 1, T):
        avg_gain = ((n - 1) * avg_gain + gain[t - 1]) / n
        avg_loss = ((n - 1) * avg_loss + loss[t - 1]) / n
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0:
        return 100.0 if avg_gain > 0 else 0.0
    if avg_gain == 0:
        return 0.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def macd(close: np.ndarray, short: int = 12, long: int = 26) -> np.ndarray:
    return ema(close, short) - ema(close, long)


def stochastic(high, low, close, n: int) -> np.ndarray:
    """%K over the trailing n+1 bars; a flat high-low window yields 50."""
    T = len(close)
    out = np.full(T, np.nan)
    for t in range(n, T):
        hh = high[t - n:t + 1].max()
        ll = low[t - n:t + 1].min()
        out[t] = 50.0 if hh == ll else 100.0 * (close[t] - ll) / (hh - ll)
    return out


def mfi(high, low, close, volume, n: int) -> np.ndarray:
    """Money Flow Index from window sums of signed typical-price flow."""
    T = len(close)
    tp = (high + low + close) / 3.0
    flow = tp * volume
    pos = np.zeros(T)
    neg = np.zeros(T)
    # flow at t is classified by the TP change from t-1 to t
    dtp = np.diff(tp)
    pos[1:] = np.where(dtp > 0, flow[1:], 0.0)
    neg[1:] = np.where(dtp <= 0, flow[1:], 0.0)
    out = np.full(T, np.nan)
    for t in range(n, T):
        p = pos[t - n:t + 1].sum()
        q = neg[t - n:t + 1].sum()
        if q == 0:
            out[t] = 50.0 if p == 0 else 100.0
        else:
            out[t] = 100.0 - 100.0 / (1.0 + p / q)
    return out


# ----------------------------------------------------------------------
# trend strength
# ----------------------------------------------------------------------

def directional_movements(high, low) -> tuple[np.ndarray, np.ndarray]:
    """Gated +DM/-DM: only the larger of the two counts, clamped at 0."""
    up = np.diff(high)
    down = -np.diff(low)
    dm_pos = np.where((up > down) & (up > 0), up, 0.0)
    dm_neg = np.where((down > up) & (down > 0), down, 0.0)
    return dm_pos, dm_neg


def adx(high, low, close, n: int) -> np.ndarray:
    """Average Directional Index with Wilder smoothing.

    Smoothed DM follows sm_t = sm_{t-1} - sm_{t-1}/n + dm_t seeded with
    the sum of the first n movements; ATR in the DI denominator is the
    simple moving average of true ranges; DX uses |DI+ - DI-| and ADX is
    the n-period Wilder average of DX seeded with the mean of the first
    n DX values.
    """
    T = len(close)
    out = np.full(T, np.nan)
    if T <= 2 * n:
        return out
    dm_pos, dm_neg = directional_movements(high, low)
    tr = true_range(high, low, close)
    atr_s = sma(tr, n)

    sm_pos = np.full(T - 1, np.nan)
    sm_neg = np.full(T - 1, np.nan)
    sm_pos[n - 1] = dm_pos[:n].sum()
    sm_neg[n - 1] = dm_neg[:n].sum()
    for t in range(n, T - 1):
        sm_pos[t] = sm_pos[t - 1] - sm_pos[t - 1] / n + dm_pos[t]
        sm_neg[t] = sm_neg[t - 1] - sm_neg[t - 1] / n + dm_neg[t]

    dx = np.full(T, np.nan)
    for t in range(n, T):
        a = atr_s[t]
        if a == 0 or np.isnan(a):
            dx[t] = 0.0
            continue
        di_pos = sm_pos[t - 1] / a * 100.0
        di_neg = sm_neg[t - 1] / a * 100.0
        denom = di_pos + di_neg
        dx[t] = 0.0 if denom == 0 else abs(di_pos - di_neg) / denom * 100.0

    out[2 * n] = np.nanmean(dx[n:2 * n + 1])
    for t in range(2 * n + 1, T):
        out[t] = (out[t - 1] * (n - 1) + dx[t]) / n
    return out


# ----------------------------------------------------------------------
# volatility block
# ----------------------------------------------------------------------

def true_range(high, low, close) -> np.ndarray:
    T = len(close)
    tr = np.empty(T)
    tr[0] = high[0] - low[0]
    prev_close = close[:-1]
    tr[1:] = np.maximum.reduce([
        high[1:] - low[1:],
        np.abs(high[1:] - prev_close),
        np.abs(low[1:] - prev_close),
    ])
    return tr


def atr(high, low, close, n: int) -> np.ndarray:
    return sma(true_range(high, low, close), n)


def bollinger(high, low, close, w: int, m: float = 2.0):
    """Upper/lower bands around the SMA of typical price; population std."""
    tp = (high + low + close) / 3.0
    T = len(close)
    up = np.full(T, np.nan)
    down = np.full(T, np.nan)
    for t in range(w - 1, T):
        win = tp[t - w + 1:t + 1]
        mu = win.mean()
        sd = win.std()
        up[t] = mu + m * sd
        down[t] = mu - m * sd
    return up, down


def obv(close, volume) -> np.ndarray:
    T = len(close)
    out = np.zeros(T)
    sign = np.sign(np.diff(close))
    out[1:] = np.cumsum(sign * volume[1:])
    return out


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def _stock_channels(o, h, l, c, v, cfg: IndicatorConfig) -> dict[str, np.ndarray]:
    channels: dict[str, np.ndarray] = {}
    if cfg.include_raw_ohlcv:
        channels.update(open=o, high=h, low=l, close=c, volume=v)
    nmax = max(cfg.ma_windows)
    ar_o, ar_h, ar_l, rc_min, rc_max = price_ratios(o, h, l, c, nmax)
    channels["ar_open"] = ar_o
    channels["ar_high"] = ar_h
    channels["ar_low"] = ar_l
    channels["rc_min"] = rc_min
    channels["rc_max"] = rc_max
    for n in cfg.ma_windows:
        channels[f"close_sma_{n}"] = sma(c, n)
        channels[f"close_ema_{n}"] = ema(c, n)
        channels[f"volume_sma_{n}"] = sma(v, n)
        channels[f"volume_ema_{n}"] = ema(v, n)
    channels["adx"] = adx(h, l, c, cfg.adx_window)
    channels["rsi"] = rsi(c, cfg.rsi_window)
    channels["macd"] = macd(c, cfg.macd_short, cfg.macd_long)
    channels["stochastic"] = stochastic(h, l, c, cfg.stochastic_window)
    channels["mfi"] = mfi(h, l, c, v, cfg.mfi_window)
    channels["atr"] = atr(h, l, c, cfg.atr_window)
    up, down = bollinger(h, l, c, cfg.bollinger_window, cfg.bollinger_m)
    channels["boll_up"] = up
    channels["boll_down"] = down
    channels["obv"] = obv(c, v)
    return channels


def assemble_features(panel: OhlcvPanel,
                      cfg: IndicatorConfig | None = None
                      ) -> tuple[np.ndarray, FeatureVectorSpec]:
    """Compute every configured indicator for every stock.

    Returns a (stocks, days, channels) tensor plus the channel-order
    spec. Warm-up days carry NaN and must be excluded from training
    windows by the caller.
    """
    cfg = cfg or IndicatorConfig()
    spec: FeatureVectorSpec | None = None
    rows = []
    for i in range(panel.n_symbols):
        channels = _stock_channels(panel.open[i], panel.high[i], panel.low[i],
                                   panel.close[i], panel.volume[i], cfg)
        if spec is None:
            spec = FeatureVectorSpec(channels=list(channels))
        rows.append(np.stack([channels[name] for name in spec.channels], axis=-1))
    return np.stack(rows, axis=0), spec
