"""Metric and portfolio-simulator tests, including the hand-traced
exit scenarios."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgwave import backtest as bt
from hgwave.errors import EmptyBatch, MissingPrice, PhaseCheckpointMissing
from hgwave.market_data import PhaseSplit

from conftest import make_panel


def pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    return float((xc * yc).sum() / np.sqrt((xc ** 2).sum() * (yc ** 2).sum()))


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------

class TestIcMetrics:
    def test_perfect_prediction(self):
        days = [np.array([1.0, 2.0, 3.0]), np.array([3.0, 1.0, 2.0])]
        ic, icir, ric, ricir = bt.ic_metrics(days, days)
        assert ic == pytest.approx(1.0)
        assert ric == pytest.approx(1.0)
        assert icir is None            # zero dispersion across days
        assert ricir is None

    def test_monotone_transform_keeps_rank_ic(self, rng):
        actual = [rng.normal(size=5) for _ in range(3)]
        pred = [np.exp(2 * a) + 7 for a in actual]
        ic, _, ric, _ = bt.ic_metrics(pred, actual)
        assert ric == pytest.approx(1.0)
        assert ic < 1.0

    def test_crafted_case_matches_formula_oracle(self):
        pred = [np.array([0.5, -0.2, 0.9]), np.array([0.1, 0.4, -0.3])]
        actual = [np.array([0.3, 0.0, 0.6]), np.array([-0.1, 0.5, 0.2])]
        ic, icir, ric, ricir = bt.ic_metrics(pred, actual)
        ics = [pearson(p, a) for p, a in zip(pred, actual)]

        def rank(v):
            order = np.argsort(np.argsort(v))
            return order.astype(float)

        rics = [pearson(rank(p), rank(a)) for p, a in zip(pred, actual)]
        assert ic == pytest.approx(np.mean(ics), abs=1e-12)
        assert ric == pytest.approx(np.mean(rics), abs=1e-12)
        assert icir == pytest.approx(np.mean(ics) / np.std(ics, ddof=1),
                                     abs=1e-12)
        assert ricir == pytest.approx(np.mean(rics) / np.std(rics, ddof=1),
                                      abs=1e-12)

    def test_degenerate_day_skipped(self, rng):
        good = rng.normal(size=4)
        days_p = [good, np.full(4, 1.0), rng.normal(size=4)]
        days_a = [rng.normal(size=4)] * 3
        ic, *_ = bt.ic_metrics(days_p, days_a)
        assert np.isfinite(ic)

    def test_too_few_days_or_stocks(self):
        with pytest.raises(EmptyBatch):
            bt.ic_metrics([np.ones(3)], [np.ones(3)])
        with pytest.raises(EmptyBatch):
            bt.ic_metrics([np.array([1.0, 2.0])] * 2,
                          [np.array([1.0, 2.0])] * 2)


class TestPrecAtN:
    def test_half_positive(self):
        pred = np.array([3.0, 2.0, 1.0])
        actual = np.array([0.5, -0.1, 0.9])
        assert bt.prec_at_n(pred, actual, 2) == 0.5

    def test_all_positive_and_all_negative(self, rng):
        pred = rng.normal(size=6)
        assert bt.prec_at_n(pred, np.abs(pred) + 0.1, 4) == 1.0
        assert bt.prec_at_n(pred, -np.abs(pred) - 0.1, 4) == 0.0

    def test_permutation_invariance(self, rng):
        pred = rng.normal(size=8)
        actual = rng.normal(size=8)
        perm = rng.permutation(8)
        assert bt.prec_at_n(pred, actual, 3) == \
            bt.prec_at_n(pred[perm], actual[perm], 3)

    def test_n_too_large(self):
        with pytest.raises(ValueError):
            bt.prec_at_n(np.ones(3), np.ones(3), 4)


# ----------------------------------------------------------------------
# simulator hand traces
# ----------------------------------------------------------------------

RISK = bt.RiskConfig(trailing_stop=0.07, take_profit=0.20, top_k=1,
                     rebalance_days=100)


class TestSimulatorTraces:
    def test_flat_hold_plus_ten_percent(self):
        close = np.array([[100.0, 100.0, 103.0, 106.0, 108.0, 110.0]])
        open_ = np.array([[100.0, 100.0, 101.0, 104.0, 107.0, 109.0]])
        panel = make_panel(close, open_=open_)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 6), RISK)
        assert curve.total_return == pytest.approx(0.10, abs=1e-12)
        assert curve.trades[-1].exit_reason == "end"

    def test_trailing_stop_exit(self):
        # entry 100, peak close 110, then low 101 pierces 110 * 0.93
        open_ = np.array([[100.0, 100.0, 104.0, 108.0, 108.0, 102.0]])
        high = np.array([[100.0, 100.0, 106.0, 111.0, 109.0, 102.0]])
        low = np.array([[100.0, 99.0, 103.0, 107.0, 101.0, 102.0]])
        close = np.array([[100.0, 100.0, 105.0, 110.0, 102.0, 102.0]])
        panel = make_panel(close, open_=open_, high=high, low=low)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 6), RISK)
        stop_price = 110.0 * (1 - RISK.trailing_stop)
        trade = curve.trades[0]
        assert trade.exit_reason == "stop"
        assert trade.exit_price == stop_price
        assert curve.total_return == pytest.approx(stop_price / 100.0 - 1.0,
                                                   abs=1e-12)

    def test_take_profit_exit(self):
        open_ = np.array([[100.0, 100.0, 99.0, 119.0]])
        high = np.array([[100.0, 100.0, 121.0, 119.0]])
        low = np.array([[100.0, 99.0, 99.0, 119.0]])
        close = np.array([[100.0, 100.0, 119.0, 119.0]])
        panel = make_panel(close, open_=open_, high=high, low=low)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 4), RISK)
        trade = curve.trades[0]
        assert trade.exit_reason == "take_profit"
        assert trade.exit_price == 120.0
        assert curve.total_return == pytest.approx(0.20, abs=1e-12)

    def test_stop_checked_before_target_same_bar(self):
        # both levels pierced in one bar: the pessimistic stop wins
        open_ = np.array([[100.0, 100.0, 100.0]])
        high = np.array([[100.0, 100.0, 130.0]])
        low = np.array([[100.0, 99.0, 90.0]])
        close = np.array([[100.0, 100.0, 100.0]])
        panel = make_panel(close, open_=open_, high=high, low=low)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 3), RISK)
        assert curve.trades[0].exit_reason == "stop"

    def test_gap_down_open_fills_below_stop_level(self):
        # the open already gapped under the stop: fill at the open
        open_ = np.array([[100.0, 100.0, 80.0]])
        high = np.array([[100.0, 100.0, 82.0]])
        low = np.array([[100.0, 99.0, 78.0]])
        close = np.array([[100.0, 100.0, 81.0]])
        panel = make_panel(close, open_=open_, high=high, low=low)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 3), RISK)
        assert curve.trades[0].exit_price == 80.0


class TestSimulatorMechanics:
    def test_limit_config_equals_buy_and_hold(self, rng):
        """Stop near 1 and an unreachable target disable risk exits."""
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, size=(4, 10)),
                                       axis=1))
        panel = make_panel(close)
        risk = bt.RiskConfig(trailing_stop=0.999999, take_profit=1e9,
                             top_k=2, rebalance_days=100)
        pred = np.array([4.0, 3.0, 2.0, 1.0])
        curve = bt.simulate_portfolio({0: pred}, panel, (0, 10), risk)
        hold = np.mean([close[s, 9] / panel.open[s, 1] for s in (0, 1)])
        assert curve.total_return == pytest.approx(hold - 1.0, abs=1e-12)

    def test_rebalance_closes_prior_positions(self):
        close = np.array([[100.0] * 6, [50.0] * 6])
        panel = make_panel(close)
        risk = bt.RiskConfig(trailing_stop=0.5, take_profit=10.0, top_k=1,
                             rebalance_days=1)
        preds = {0: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0])}
        curve = bt.simulate_portfolio(preds, panel, (0, 6), risk)
        rebalances = [t for t in curve.trades if t.exit_reason == "rebalance"]
        assert len(rebalances) == 1
        assert rebalances[0].symbol == panel.symbols[0]

    def test_nav_does_not_rise_when_all_closes_fall(self):
        close = np.array([[100.0, 100.0, 98.0, 96.5, 95.0, 94.0]])
        panel = make_panel(close)
        risk = bt.RiskConfig(trailing_stop=0.5, take_profit=10.0, top_k=1,
                             rebalance_days=100)
        curve = bt.simulate_portfolio({0: np.array([1.0])}, panel,
                                      (0, 6), risk)
        navs = curve.nav[1:]     # from entry onwards
        assert all(b <= a + 1e-12 for a, b in zip(navs, navs[1:]))

    def test_transaction_cost_reduces_return(self):
        close = np.array([[100.0, 100.0, 110.0]])
        panel = make_panel(close)
        free = bt.RiskConfig(trailing_stop=0.5, take_profit=10.0, top_k=1)
        costly = bt.RiskConfig(trailing_stop=0.5, take_profit=10.0, top_k=1,
                               cost=0.01)
        pred = {0: np.array([1.0])}
        r_free = bt.simulate_portfolio(pred, panel, (0, 3), free).total_return
        r_cost = bt.simulate_portfolio(pred, panel, (0, 3),
                                       costly).total_return
        assert r_cost < r_free

    def test_missing_open_price_raises(self):
        close = np.array([[100.0, np.nan, 100.0]])
        panel = make_panel(close)
        panel.open[0, 1] = np.nan
        with pytest.raises(MissingPrice):
            bt.simulate_portfolio({0: np.array([1.0])}, panel, (0, 3), RISK)

    def test_no_predictions_raises(self):
        panel = make_panel(np.ones((1, 3)) * 100)
        with pytest.raises(MissingPrice):
            bt.simulate_portfolio({}, panel, (0, 3), RISK)

    def test_deterministic_without_jitter(self, rng):
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, size=(3, 8)),
                                       axis=1))
        panel = make_panel(close)
        pred = {0: rng.normal(size=3)}
        a = bt.simulate_portfolio(pred, panel, (0, 8), RISK, seed=1)
        b = bt.simulate_portfolio(pred, panel, (0, 8), RISK, seed=99)
        assert a.nav == b.nav

    def test_jitter_varies_with_seed(self, rng):
        close = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, size=(3, 8)),
                                       axis=1))
        panel = make_panel(close)
        risk = bt.RiskConfig(trailing_stop=0.07, take_profit=0.2, top_k=1,
                             fill_jitter=0.01)
        pred = {0: np.array([3.0, 2.0, 1.0])}
        a = bt.simulate_portfolio(pred, panel, (0, 8), risk, seed=1)
        b = bt.simulate_portfolio(pred, panel, (0, 8), risk, seed=2)
        assert a.nav != b.nav


# ----------------------------------------------------------------------
# rolling aggregation and reports
# ----------------------------------------------------------------------

def _phase_fixture(rng, n=5, T=40):
    close = 100 * np.exp(np.cumsum(rng.normal(0.001, 0.02, size=(n, T)),
                                   axis=1))
    panel = make_panel(close)
    labels = np.full((n, T), np.nan)
    labels[:, :-5] = (close[:, 5:] - close[:, :-5]) / close[:, :-5]
    phase = PhaseSplit(1, train=(0, 20), valid=(20, 28), test=(28, 38))
    preds = {t: rng.normal(size=n) for t in range(28, 34)}
    return panel, labels, phase, preds


class TestRollingBacktest:
    def test_evaluate_phase_deterministic(self, rng):
        panel, labels, phase, preds = _phase_fixture(rng)
        risk = bt.RiskConfig(top_k=3, rebalance_days=3)
        a = bt.evaluate_phase(phase, preds, labels, panel, risk)
        b = bt.evaluate_phase(phase, preds, labels, panel, risk)
        assert a == b

    def test_missing_phase_predictions(self, rng):
        panel, labels, phase, preds = _phase_fixture(rng)
        with pytest.raises(PhaseCheckpointMissing):
            bt.run_rolling_backtest([phase], {}, labels, panel,
                                    bt.RiskConfig(top_k=3))

    def test_report_aggregate_is_phase_mean(self):
        phases = [
            bt.PhaseMetrics(1, ret=0.1, ic=0.2, icir=1.0, rank_ic=0.3,
                            rank_icir=None, prec_at_n=0.6),
            bt.PhaseMetrics(2, ret=0.3, ic=0.4, icir=3.0, rank_ic=0.5,
                            rank_icir=2.0, prec_at_n=0.8),
        ]
        agg = bt.BacktestReport(phases=phases).aggregate()
        assert agg["ret"] == pytest.approx(0.2)
        assert agg["icir"] == pytest.approx(2.0)
        assert agg["rank_icir"] == pytest.approx(2.0)   # None skipped

    def test_report_serialization(self):
        phases = [bt.PhaseMetrics(1, 0.1, 0.2, None, 0.3, None, 0.5)]
        report = bt.BacktestReport(phases=phases, meta={"seed": 0})
        import json
        payload = json.loads(report.to_json())
        assert payload["phases"][0]["icir"] is None
        assert payload["meta"] == {"seed": 0}
        csv_text = report.to_csv()
        assert csv_text.startswith("phase,metric,value")
        assert "1,icir,\n" in csv_text                  # None -> empty cell
        assert "mean,ret,0.1" in csv_text


# ----------------------------------------------------------------------
# property-based metric invariants
# ----------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_rank_ic_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    pred = [rng.normal(size=6) for _ in range(3)]
    actual = [rng.normal(size=6) for _ in range(3)]
    _, _, ric_a, _ = bt.ic_metrics(pred, actual)
    transformed = [np.exp(1.5 * p) - 3 for p in pred]
    _, _, ric_b, _ = bt.ic_metrics(transformed, actual)
    assert ric_a == pytest.approx(ric_b, abs=1e-9)
    assert -1 - 1e-9 <= ric_a <= 1 + 1e-9
