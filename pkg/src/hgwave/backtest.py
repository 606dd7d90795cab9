"""Rolling-phase evaluation: prediction metrics, portfolio simulation,
and report aggregation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmptyBatch, MissingPrice, PhaseCheckpointMissing
from .market_data import OhlcvPanel, PhaseSplit

logger = logging.getLogger(__name__)


@dataclass
class RiskConfig:
    trailing_stop: float = 0.07
    take_profit: float = 0.20
    top_k: int = 10
    rebalance_days: int = 5
    cost: float = 0.0
    fill_jitter: float = 0.0    # per-run uniform fill noise; 0 => deterministic

    def __post_init__(self):
        if not 0 < self.trailing_stop < 1:
            raise ValueError("trailing_stop must be in (0, 1)")
        if self.take_profit <= 0:
            raise ValueError("take_profit must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class TradeRecord:
    symbol: str
    entry_day: int
    exit_day: int
    entry_price: float
    exit_price: float
    exit_reason: str    # stop | take_profit | rebalance | end


@dataclass
class EquityCurve:
    days: list[int]
    nav: list[float]
    trades: list[TradeRecord] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return self.nav[-1] / self.nav[0] - 1.0


@dataclass
class PhaseMetrics:
    phase_id: int
    ret: float
    ic: float
    icir: float | None
    rank_ic: float
    rank_icir: float | None
    prec_at_n: float


@dataclass
class BacktestReport:
    phases: list[PhaseMetrics]
    meta: dict = field(default_factory=dict)

    def aggregate(self) -> dict[str, float | None]:
        def avg(values):
            vals = [v for v in values if v is not None]
            return float(np.mean(vals)) if vals else None
        return {
            "ret": avg(p.ret for p in self.phases),
            "ic": avg(p.ic for p in self.phases),
            "icir": avg(p.icir for p in self.phases),
            "rank_ic": avg(p.rank_ic for p in self.phases),
            "rank_icir": avg(p.rank_icir for p in self.phases),
            "prec_at_n": avg(p.prec_at_n for p in self.phases),
        }

    # ------------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({
            "phases": [vars(p) for p in self.phases],
            "mean": self.aggregate(),
            "meta": self.meta,
        }, indent=2)

    def to_csv(self) -> str:
        lines = ["phase,metric,value"]
        metrics = ("ret", "ic", "icir", "rank_ic", "rank_icir", "prec_at_n")
        for p in self.phases:
            for m in metrics:
                v = getattr(p, "ret" if m == "ret" else m)
                lines.append(f"{p.phase_id},{m},"
                             f"{'' if v is None else repr(float(v))}")
        agg = self.aggregate()
        for m in metrics:
            v = agg[m]
            lines.append(f"mean,{m},{'' if v is None else repr(float(v))}")
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------

def ic_metrics(pred_days: list[np.ndarray], actual_days: list[np.ndarray]
               ) -> tuple[float, float | None, float, float | None]:
    """Daily cross-sectional Pearson/Spearman correlations averaged over
    days, plus their information ratios (mean / sample std).

    Zero-variance days are skipped with a log record; a zero std of the
    daily series leaves the ratio undefined (None).
    """
    if len(pred_days) < 2:
        raise EmptyBatch("need at least 2 days for IC metrics")
    ics, rics = [], []
    for day, (p, a) in enumerate(zip(pred_days, actual_days)):
        if len(p) < 3:
            raise EmptyBatch("need at least 3 stocks per day")
        if np.std(p) == 0 or np.std(a) == 0:
            logger.warning("degenerate cross-section on day %d skipped", day)
            continue
        ics.append(float(stats.pearsonr(p, a)[0]))
        rics.append(float(stats.spearmanr(p, a)[0]))
    if len(ics) < 2:
        raise EmptyBatch("fewer than 2 non-degenerate days")
    ic = float(np.mean(ics))
    ric = float(np.mean(rics))
    ic_std = float(np.std(ics, ddof=1))
    ric_std = float(np.std(rics, ddof=1))
    icir = ic / ic_std if ic_std > 0 else None
    ricir = ric / ric_std if ric_std > 0 else None
    return ic, icir, ric, ricir


def prec_at_n(pred: np.ndarray, actual: np.ndarray, n: int) -> float:
    """Fraction of the n highest-predicted entries with positive actuals.
    Ties break by index order, so the result is deterministic."""
    if n > len(pred):
        raise ValueError("n exceeds cross-section size")
    order = np.argsort(-pred, kind="stable")[:n]
    return float(np.mean(actual[order] > 0))


# ----------------------------------------------------------------------
# portfolio simulation
# ----------------------------------------------------------------------

@dataclass
class _Position:
    stock: int
    shares: float
    entry_price: float
    entry_day: int
    peak_close: float


def simulate_portfolio(predictions: dict[int, np.ndarray], panel: OhlcvPanel,
                       test_range: tuple[int, int], risk: RiskConfig,
                       seed: int | None = None) -> EquityCurve:
    """Simulate an equal-weight top-k portfolio with risk exits.

    `predictions` maps a rebalance day index to that day's cross-section
    of predictions; entries fill at the next day's open. Daily, each
    position exits at the trailing-stop price when the low touches
    peak_close * (1 - trailing_stop), else at the take-profit price when
    the high reaches entry * (1 + take_profit); the stop is checked
    first. Exited capital sits in cash until the next rebalance.
    """
    lo, hi = test_range
    hi = min(hi, panel.n_days)
    if not predictions:
        raise MissingPrice("no predictions supplied to the simulator")
    rng = np.random.default_rng(seed) if seed is not None else None

    nav = 1.0
    cash = 1.0
    positions: list[_Position] = []
    pending: list[int] | None = None     # stocks to buy at next open
    curve_days: list[int] = []
    curve_nav: list[float] = []
    trades: list[TradeRecord] = []

    def close_position(pos: _Position, day: int, price: float, reason: str):
        nonlocal cash
        proceeds = pos.shares * price * (1 - risk.cost)
        cash += proceeds
        trades.append(TradeRecord(panel.symbols[pos.stock], pos.entry_day,
                                  day, pos.entry_price, price, reason))

    for day in range(lo, hi):
        # fills queued at the previous rebalance execute at today's open
        if pending is not None:
            for pos in positions:
                close_position(pos, day, panel.open[pos.stock, day],
                               "rebalance")
            positions = []
            alloc = cash / len(pending)
            for stock in pending:
                price = panel.open[stock, day]
                if not np.isfinite(price):
                    raise MissingPrice(
                        f"no open price for {panel.symbols[stock]} day {day}")
                if rng is not None and risk.fill_jitter > 0:
                    price *= 1 + rng.uniform(-risk.fill_jitter,
                                             risk.fill_jitter)
                shares = alloc * (1 - risk.cost) / price
                cash -= alloc
                positions.append(_Position(stock, shares, price, day, price))
            pending = None

        # risk exits, stop before target
        still_open = []
        for pos in positions:
            low = panel.low[pos.stock, day]
            high = panel.high[pos.stock, day]
            open_ = panel.open[pos.stock, day]
            stop_level = pos.peak_close * (1 - risk.trailing_stop)
            target = pos.entry_price * (1 + risk.take_profit)
            if low <= stop_level:
                close_position(pos, day, min(open_, stop_level), "stop")
            elif high >= target:
                close_position(pos, day, max(open_, target), "take_profit")
            else:
                pos.peak_close = max(pos.peak_close,
                                     panel.close[pos.stock, day])
                still_open.append(pos)
        positions = still_open

        # queue a rebalance decided on today's prediction
        if day in predictions and day + 1 < hi:
            pred = predictions[day]
            k = min(risk.top_k, len(pred))
            pending = list(np.argsort(-pred, kind="stable")[:k])

        nav = cash + sum(p.shares * panel.close[p.stock, day]
                         for p in positions)
        curve_days.append(day)
        curve_nav.append(nav)

    for pos in positions:
        close_position(pos, hi - 1, panel.close[pos.stock, hi - 1], "end")
    if curve_nav:
        curve_nav[-1] = cash

    return EquityCurve(days=curve_days, nav=curve_nav, trades=trades)


# ----------------------------------------------------------------------
# rolling aggregation
# ----------------------------------------------------------------------

def evaluate_phase(phase: PhaseSplit, daily_preds: dict[int, np.ndarray],
                   labels: np.ndarray, panel: OhlcvPanel, risk: RiskConfig,
                   repeats: int = 1, seed: int = 0) -> PhaseMetrics:
    """Metrics plus simulated return for one phase's test range.

    The simulation averages `repeats` seeded runs; with zero fill
    jitter every run is identical, so the default stays deterministic.
    """
    days = sorted(d for d in daily_preds
                  if np.all(np.isfinite(labels[:, d])))
    preds = [daily_preds[d] for d in days]
    actuals = [labels[:, d] for d in days]
    ic, icir, ric, ricir = ic_metrics(preds, actuals)
    prec = float(np.mean([prec_at_n(p, a, min(risk.top_k, len(p)))
                          for p, a in zip(preds, actuals)]))

    rebalance_days = {d: daily_preds[d]
                      for d in sorted(daily_preds)[::risk.rebalance_days]}
    rets = []
    for r in range(repeats):
        curve = simulate_portfolio(rebalance_days, panel, phase.test, risk,
                                   seed=seed + r if risk.fill_jitter > 0
                                   else None)
        rets.append(curve.total_return)
    return PhaseMetrics(phase_id=phase.phase_id, ret=float(np.mean(rets)),
                        ic=ic, icir=icir, rank_ic=ric, rank_icir=ricir,
                        prec_at_n=prec)


def run_rolling_backtest(phases: list[PhaseSplit],
                         predictions_by_phase: dict[int, dict[int, np.ndarray]],
                         labels: np.ndarray, panel: OhlcvPanel,
                         risk: RiskConfig, repeats: int = 1,
                         seed: int = 0) -> BacktestReport:
    """Evaluate every phase and aggregate mean metrics across phases."""
    results = []
    for phase in phases:
        if phase.phase_id not in predictions_by_phase:
            raise PhaseCheckpointMissing(
                f"no predictions for phase {phase.phase_id}")
        results.append(evaluate_phase(
            phase, predictions_by_phase[phase.phase_id], labels, panel,
            risk, repeats=repeats, seed=seed))
    return BacktestReport(phases=results,
                          meta={"repeats": repeats, "seed": seed})
