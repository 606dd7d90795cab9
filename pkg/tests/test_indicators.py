"""Indicator tests against independent non-recurrent re-derivations.

Every smoothed indicator in the package is computed with a recurrence;
the oracles here expand those recurrences into explicit weighted sums so
an off-by-one or a wrong seed cannot cancel out.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgwave import indicators as ind
from hgwave.errors import ZeroPrice

from conftest import make_panel


def random_bars(rng, T=50):
    close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, T)))
    spread = np.abs(rng.normal(0, 0.01, T))
    open_ = close * (1 + rng.normal(0, 0.005, T))
    high = np.maximum(open_, close) * (1 + spread)
    low = np.minimum(open_, close) * (1 - spread)
    volume = rng.integers(100, 10_000, T).astype(float)
    return open_, high, low, close, volume


# ----------------------------------------------------------------------
# closed-form oracles
# ----------------------------------------------------------------------

def ema_oracle(series, n):
    """EMA as an explicit geometric weighted sum (no recurrence)."""
    k = 2.0 / (n + 1)
    out = np.empty(len(series))
    for t in range(len(series)):
        w = k * (1 - k) ** np.arange(t)          # weights for x_t .. x_1
        out[t] = np.dot(w, series[t:0:-1]) + (1 - k) ** t * series[0]
    return out


def wilder_average_oracle(seed, values, n, start):
    """avg_t = ((n-1) avg_{t-1} + v_t)/n unrolled into a weighted sum.

    `seed` is the value at index `start`; `values[t]` feeds the update
    that produces index t (t > start).
    """
    r = (n - 1) / n
    out = {}
    for t in sorted(values):
        if t <= start:
            continue
        acc = seed * r ** (t - start)
        for u in range(start + 1, t + 1):
            acc += values[u] / n * r ** (t - u)
        out[t] = acc
    return out


def rsi_oracle(close, n):
    T = len(close)
    out = np.full(T, np.nan)
    diff = np.diff(close)
    gain = np.where(diff > 0, diff, 0.0)
    loss = np.where(diff > 0, 0.0, -diff)
    g_seed, l_seed = gain[:n].mean(), loss[:n].mean()
    g = wilder_average_oracle(g_seed, {t: gain[t - 1] for t in range(n + 1, T)},
                              n, n)
    l = wilder_average_oracle(l_seed, {t: loss[t - 1] for t in range(n + 1, T)},
                              n, n)
    g[n], l[n] = g_seed, l_seed
    for t in range(n, T):
        ag, al = g[t], l[t]
        if al == 0:
            out[t] = 100.0 if ag > 0 else 0.0
        elif ag == 0:
            out[t] = 0.0
        else:
            out[t] = 100.0 - 100.0 / (1.0 + ag / al)
    return out


def adx_oracle(high, low, close, n):
    """ADX re-derived from explicit weighted sums of the raw movements."""
    T = len(close)
    out = np.full(T, np.nan)
    up = np.diff(high)
    down = -np.diff(low)
    dm_pos = np.where((up > down) & (up > 0), up, 0.0)
    dm_neg = np.where((down > up) & (down > 0), down, 0.0)
    tr = np.empty(T)
    tr[0] = high[0] - low[0]
    tr[1:] = np.maximum.reduce([high[1:] - low[1:],
                                np.abs(high[1:] - close[:-1]),
                                np.abs(low[1:] - close[:-1])])
    r = (n - 1) / n
    # smoothed DM as a geometric sum: sum-seed at index n-1 of the diffs
    def smoothed(dm, t):                         # t indexes the diff series
        acc = dm[:n].sum() * r ** (t - (n - 1))
        for u in range(n, t + 1):
            acc += dm[u] * r ** (t - u)
        return acc

    dx = np.full(T, np.nan)
    for t in range(n, T):
        a = np.mean(tr[t - n + 1:t + 1])
        if a == 0:
            dx[t] = 0.0
            continue
        di_p = smoothed(dm_pos, t - 1) / a * 100
        di_n = smoothed(dm_neg, t - 1) / a * 100
        denom = di_p + di_n
        dx[t] = 0.0 if denom == 0 else abs(di_p - di_n) / denom * 100
    seed = np.nanmean(dx[n:2 * n + 1])
    for t in range(2 * n, T):
        acc = seed * r ** (t - 2 * n)
        for u in range(2 * n + 1, t + 1):
            acc += dx[u] / n * r ** (t - u)
        out[t] = acc
    return out


# ----------------------------------------------------------------------
# moving averages
# ----------------------------------------------------------------------

class TestMovingAverages:
    def test_sma_matches_direct_means(self, rng):
        x = rng.normal(size=30)
        out = ind.sma(x, 7)
        assert np.isnan(out[:6]).all()
        for t in range(6, 30):
            assert out[t] == pytest.approx(x[t - 6:t + 1].mean(), abs=1e-12)

    def test_ema_matches_closed_form(self, rng):
        x = rng.normal(size=50)
        np.testing.assert_allclose(ind.ema(x, 10), ema_oracle(x, 10),
                                   atol=1e-9)

    def test_constant_series(self):
        x = np.full(20, 3.5)
        np.testing.assert_allclose(ind.sma(x, 5)[4:], 3.5)
        np.testing.assert_allclose(ind.ema(x, 5), 3.5)
        np.testing.assert_allclose(ind.macd(x), 0.0, atol=1e-12)


class TestPriceRatios:
    def test_flat_bar_ratios_are_one(self):
        c = np.array([10.0, 11.0, 12.0])
        ar_o, ar_h, ar_l, rc_min, rc_max = ind.price_ratios(c, c, c, c, 2)
        np.testing.assert_allclose(ar_o, 1.0)
        np.testing.assert_allclose(ar_h, 1.0)
        np.testing.assert_allclose(ar_l, 1.0)

    def test_close_at_window_extremes(self):
        c = np.array([5.0, 4.0, 6.0])
        *_, rc_min, rc_max = ind.price_ratios(c, c, c, c, 2)
        assert rc_max[2] == 1.0          # current close is the window max
        assert rc_min[2] == pytest.approx(6.0 / 4.0)

    def test_zero_close_rejected(self):
        c = np.array([1.0, 0.0])
        with pytest.raises(ZeroPrice):
            ind.price_ratios(c, c, c, c, 1)


# ----------------------------------------------------------------------
# oscillators
# ----------------------------------------------------------------------

class TestOscillators:
    def test_rsi_matches_oracle(self, rng):
        _, _, _, close, _ = random_bars(rng)
        np.testing.assert_allclose(ind.rsi(close, 14), rsi_oracle(close, 14),
                                   atol=1e-9)

    def test_rsi_limits(self):
        up = np.arange(1.0, 31.0)
        assert np.all(ind.rsi(up, 14)[14:] == 100.0)
        down = up[::-1].copy()
        assert np.all(ind.rsi(down, 14)[14:] == 0.0)

    def test_stochastic_extremes_and_flat(self):
        high = np.array([10.0, 11, 12, 12])
        low = np.array([8.0, 9, 10, 10])
        close_hi = np.array([9.0, 10, 11, 12])
        assert ind.stochastic(high, low, close_hi, 2)[3] == 100.0
        close_lo = np.array([9.0, 10, 11, 9])
        assert ind.stochastic(high, low, close_lo, 2)[3] == 0.0
        flat = np.full(4, 10.0)
        assert ind.stochastic(flat, flat, flat, 2)[3] == 50.0

    def test_stochastic_matches_direct_formula(self, rng):
        _, high, low, close, _ = random_bars(rng)
        out = ind.stochastic(high, low, close, 14)
        for t in range(14, 50):
            hh, ll = high[t - 14:t + 1].max(), low[t - 14:t + 1].min()
            assert out[t] == pytest.approx(100 * (close[t] - ll) / (hh - ll),
                                           abs=1e-9)

    def test_mfi_matches_direct_sums(self, rng):
        _, high, low, close, volume = random_bars(rng)
        out = ind.mfi(high, low, close, volume, 14)
        tp = (high + low + close) / 3
        flow = tp * volume
        for t in range(14, 50):
            pos = sum(flow[u] for u in range(max(1, t - 14), t + 1)
                      if tp[u] > tp[u - 1])
            neg = sum(flow[u] for u in range(max(1, t - 14), t + 1)
                      if tp[u] <= tp[u - 1])
            if neg == 0:
                expected = 50.0 if pos == 0 else 100.0
            else:
                expected = 100 - 100 / (1 + pos / neg)
            assert out[t] == pytest.approx(expected, abs=1e-9)

    def test_mfi_zero_negative_flow(self):
        close = np.arange(1.0, 10.0)
        flat = np.ones(9)
        out = ind.mfi(close, close, close, flat, 3)
        assert np.all(out[3:] == 100.0)

    def test_macd_is_ema_difference(self, rng):
        _, _, _, close, _ = random_bars(rng)
        np.testing.assert_allclose(
            ind.macd(close), ema_oracle(close, 12) - ema_oracle(close, 26),
            atol=1e-9)


# ----------------------------------------------------------------------
# trend strength
# ----------------------------------------------------------------------

class TestAdx:
    def test_gated_directional_movements(self):
        high = np.array([10.0, 12.0, 11.0])
        low = np.array([9.0, 10.0, 7.0])
        dm_pos, dm_neg = ind.directional_movements(high, low)
        np.testing.assert_allclose(dm_pos, [2.0, 0.0])   # up move dominates
        np.testing.assert_allclose(dm_neg, [0.0, 3.0])   # down move dominates

    def test_flat_market_adx_zero(self):
        flat = np.full(40, 10.0)
        out = ind.adx(flat, flat, flat, 5)
        assert np.all(out[10:] == 0.0)

    def test_single_sided_trend_dx_100(self):
        t = np.arange(40.0)
        high, low, close = 10 + t, 9 + t, 9.5 + t
        out = ind.adx(high, low, close, 5)
        np.testing.assert_allclose(out[10:], 100.0, atol=1e-9)

    def test_matches_oracle(self, rng):
        _, high, low, close, _ = random_bars(rng)
        np.testing.assert_allclose(ind.adx(high, low, close, 5),
                                   adx_oracle(high, low, close, 5),
                                   atol=1e-9)

    def test_short_series_all_nan(self):
        x = np.ones(10)
        assert np.isnan(ind.adx(x, x, x, 5)).all()


# ----------------------------------------------------------------------
# volatility block
# ----------------------------------------------------------------------

class TestVolatility:
    def test_true_range_components(self):
        high = np.array([10.0, 11.0])
        low = np.array([9.0, 10.5])
        close = np.array([9.5, 10.8])
        tr = ind.true_range(high, low, close)
        assert tr[0] == 1.0                       # first bar: H - L
        assert tr[1] == pytest.approx(max(0.5, 1.5, 1.0))

    def test_atr_is_sma_of_true_range(self, rng):
        _, high, low, close, _ = random_bars(rng)
        np.testing.assert_allclose(
            ind.atr(high, low, close, 14),
            ind.sma(ind.true_range(high, low, close), 14), atol=1e-12)

    def test_bollinger_direct(self, rng):
        _, high, low, close, _ = random_bars(rng)
        up, down = ind.bollinger(high, low, close, 20, 2.0)
        tp = (high + low + close) / 3
        for t in range(19, 50):
            win = tp[t - 19:t + 1]
            assert up[t] == pytest.approx(win.mean() + 2 * win.std(),
                                          abs=1e-9)
            assert down[t] == pytest.approx(win.mean() - 2 * win.std(),
                                            abs=1e-9)

    def test_bollinger_constant_tp_collapses_to_ma(self):
        x = np.full(25, 7.0)
        up, down = ind.bollinger(x, x, x, 20)
        np.testing.assert_allclose(up[19:], 7.0)
        np.testing.assert_allclose(down[19:], 7.0)

    def test_obv_hand_trace(self):
        close = np.array([1.0, 2.0, 2.0, 1.0])
        volume = np.full(4, 10.0)
        np.testing.assert_allclose(ind.obv(close, volume),
                                   [0.0, 10.0, 10.0, 0.0])


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

class TestAssembly:
    def test_shapes_and_spec_order(self, rng):
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, size=(3, 60)),
                                       axis=1))
        panel = make_panel(close)
        feats, spec = ind.assemble_features(panel)
        assert feats.shape == (3, 60, len(spec.channels))
        assert spec.channels[spec.index("rsi")] == "rsi"
        # the rsi channel matches a per-stock computation
        np.testing.assert_array_equal(feats[1, :, spec.index("rsi")],
                                      ind.rsi(close[1], 14))

    def test_causality_of_assembled_features(self, rng):
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, size=(1, 80)),
                                       axis=1))
        panel_a = make_panel(close)
        tampered = close.copy()
        tampered[:, 60:] *= 1.5
        panel_b = make_panel(tampered)
        fa, _ = ind.assemble_features(panel_a)
        fb, _ = ind.assemble_features(panel_b)
        np.testing.assert_array_equal(fa[:, :60, :], fb[:, :60, :])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ind.IndicatorConfig(macd_short=26, macd_long=12)
        with pytest.raises(ValueError):
            ind.IndicatorConfig(rsi_window=0)


# ----------------------------------------------------------------------
# property-based bounds
# ----------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_bounded_indicators_stay_in_range(seed):
    rng = np.random.default_rng(seed)
    _, high, low, close, volume = random_bars(rng, T=40)
    for series in (ind.rsi(close, 5), ind.stochastic(high, low, close, 5),
                   ind.mfi(high, low, close, volume, 5),
                   ind.adx(high, low, close, 5)):
        valid = series[np.isfinite(series)]
        assert np.all(valid >= -1e-9)
        assert np.all(valid <= 100 + 1e-9)
