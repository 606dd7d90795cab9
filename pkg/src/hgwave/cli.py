"""Command-line pipeline: ingest -> features -> graph -> train ->
predict -> backtest -> report.

Each stage persists its artifacts in the run directory so later stages
(and re-runs) can pick them up independently. A manifest records the
config snapshot, input hashes, and artifact list after every stage.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import backtest as bt
from . import hypergraph as hg
from . import market_data as md
from .config import RunSettings, load_settings
from .errors import (
    ConfigInvalid,
    HgwaveError,
    IoFailure,
    UnknownCommand,
    UpstreamArtifactMissing,
)
from .indicators import assemble_features
from .model import PredictionModel
from .training import train_phase, usable_days

logger = logging.getLogger(__name__)

COMMANDS = ("ingest", "features", "graph", "train", "predict", "backtest",
            "report")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _update_manifest(out: Path, settings: RunSettings, stage: str,
                     inputs: dict[str, str], artifacts: list[str]):
    path = out / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {
        "version": __version__, "stages": {}, "artifacts": [],
        "config": settings.to_dict(), "input_hashes": {},
    }
    manifest["config"] = settings.to_dict()
    manifest["input_hashes"].update(inputs)
    manifest["stages"][stage] = {"timestamp": dt.datetime.now().isoformat()}
    for a in artifacts:
        if a not in manifest["artifacts"]:
            manifest["artifacts"].append(a)
    path.write_text(json.dumps(manifest, indent=2, default=str))


def _require(out: Path, name: str) -> Path:
    path = out / name
    if not path.exists():
        raise UpstreamArtifactMissing(
            f"missing artifact {name}; run the producing stage first")
    return path


def _load_panel(out: Path) -> md.OhlcvPanel:
    with np.load(_require(out, "panel.npz"), allow_pickle=False) as z:
        symbols = [str(s) for s in z["symbols"]]
        calendar = [dt.date.fromisoformat(str(d)) for d in z["calendar"]]
        meta = json.loads(_require(out, "meta.json").read_text())
        return md.OhlcvPanel(symbols=symbols, calendar=calendar,
                             open=z["open"], high=z["high"], low=z["low"],
                             close=z["close"], volume=z["volume"], meta=meta)


def _load_phases(out: Path) -> list[md.PhaseSplit]:
    raw = json.loads(_require(out, "phases.json").read_text())
    return [md.PhaseSplit(phase_id=p["phase_id"], train=tuple(p["train"]),
                          valid=tuple(p["valid"]), test=tuple(p["test"]),
                          start_date=dt.date.fromisoformat(p["start_date"]))
            for p in raw]


def _load_graph(out: Path, phase_id: int) -> hg.Hypergraph:
    raw = json.loads(_require(out, f"hypergraph_phase{phase_id}.json")
                     .read_text())
    panel_symbols = raw["symbols"]
    index = {s: i for i, s in enumerate(panel_symbols)}
    edges = [hg.Hyperedge(members=tuple(index[s] for s in e["members"]),
                          weight=e["weight"], source=e["source"])
             for e in raw["edges"]]
    return hg.Hypergraph(n=len(panel_symbols), edges=edges)


# ----------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------

def stage_ingest(args, settings: RunSettings, out: Path) -> list[str]:
    if not args.data:
        raise ConfigInvalid("--data is required for ingest")
    panel = md.load_ohlcv(args.data, meta_path=args.meta)
    np.savez(out / "panel.npz",
             symbols=np.array(panel.symbols),
             calendar=np.array([d.isoformat() for d in panel.calendar]),
             open=panel.open, high=panel.high, low=panel.low,
             close=panel.close, volume=panel.volume)
    (out / "meta.json").write_text(json.dumps(panel.meta, indent=2))
    if panel.warnings:
        (out / "ingest_warnings.txt").write_text("\n".join(panel.warnings))
    return ["panel.npz", "meta.json"]


def stage_features(args, settings: RunSettings, out: Path) -> list[str]:
    panel = _load_panel(out)
    features, spec = assemble_features(panel, settings.indicators)
    labels = md.compute_labels(panel, settings.data.lookahead)
    normalized = md.normalize_features(features,
                                       settings.data.normalization_window)
    np.savez(out / "features.npz", raw=features, normalized=normalized,
             labels=labels.values)
    (out / "feature_spec.json").write_text(
        json.dumps({"channels": spec.channels,
                    "lookahead": settings.data.lookahead}, indent=2))
    if args.dump_indicators:
        lines = ["date,symbol,channel,value"]
        for i, sym in enumerate(panel.symbols):
            for t, day in enumerate(panel.calendar):
                for c, name in enumerate(spec.channels):
                    lines.append(f"{day.isoformat()},{sym},{name},"
                                 f"{features[i, t, c]:.10g}")
        (out / "indicators.csv").write_text("\n".join(lines) + "\n")
    return ["features.npz", "feature_spec.json"]


def stage_graph(args, settings: RunSettings, out: Path) -> list[str]:
    panel = _load_panel(out)
    phases = md.make_rolling_phases(panel.calendar, settings.phases)
    (out / "phases.json").write_text(json.dumps([
        {"phase_id": p.phase_id, "train": p.train, "valid": p.valid,
         "test": p.test, "start_date": p.start_date.isoformat()}
        for p in phases], indent=2))
    artifacts = ["phases.json"]
    dollar_volume = np.nanmean(panel.close * panel.volume, axis=1)
    fallback = dict(zip(panel.symbols, dollar_volume))
    for phase in phases:
        closes = panel.close[:, :phase.train[0] + 1]
        use_corr = (not settings.model.ablation.no_corr_augment
                    and closes.shape[1] >= settings.correlation.min_history)
        graph = hg.build_market_hypergraph(
            panel.symbols, panel.meta,
            closes=closes if use_corr else None,
            corr_cfg=settings.correlation, fallback_caps=fallback,
            use_correlation=use_corr)
        payload = json.loads(graph.to_json(panel.symbols))
        payload["symbols"] = panel.symbols
        name = f"hypergraph_phase{phase.phase_id}.json"
        (out / name).write_text(json.dumps(payload, indent=2))
        artifacts.append(name)
    return artifacts


def _train_one_phase(out_str: str, phase_id: int, settings: RunSettings
                     ) -> str:
    out = Path(out_str)
    phases = _load_phases(out)
    phase = next(p for p in phases if p.phase_id == phase_id)
    with np.load(_require(out, "features.npz")) as z:
        features, labels = z["normalized"], z["labels"]
    graph = (None if settings.model.ablation.no_hypergraph
             else _load_graph(out, phase_id))
    model, ckpt = train_phase(features, labels, phase, settings.model,
                              settings.train, graph=graph)
    name = f"checkpoint_phase{phase_id}.json"
    model.save(out / name, extra={"phase_id": phase_id, "epoch": ckpt.epoch,
                                  "valid_rmse": ckpt.valid_rmse})
    logger.info("phase %d trained: best epoch %d valid RMSE %.5f",
                phase_id, ckpt.epoch, ckpt.valid_rmse)
    return name


def stage_train(args, settings: RunSettings, out: Path) -> list[str]:
    _require(out, "features.npz")
    phases = _load_phases(out)
    if args.phase is not None:
        phases = [p for p in phases if p.phase_id == args.phase]
        if not phases:
            raise ConfigInvalid(f"phase {args.phase} not in layout")
    jobs = [(str(out), p.phase_id, settings) for p in phases]
    if args.parallel_phases > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(args.parallel_phases) as pool:
            return pool.starmap(_train_one_phase, jobs)
    return [_train_one_phase(*job) for job in jobs]


def _predict_phase(out: Path, settings: RunSettings, phase: md.PhaseSplit
                   ) -> dict[int, np.ndarray]:
    with np.load(_require(out, "features.npz")) as z:
        features, labels = z["normalized"], z["labels"]
    graph = (None if settings.model.ablation.no_hypergraph
             else _load_graph(out, phase.phase_id))
    n, _, n_feat = features.shape
    model = PredictionModel(settings.model, n, n_feat,
                            seed=settings.train.seed)
    model.load(_require(out, f"checkpoint_phase{phase.phase_id}.json"))
    cache = None
    if graph is not None and settings.model.ablation.fourier_basis:
        cache = hg.spectral_prepare(graph, with_eig=True)
    T = settings.model.temporal.lookback
    days = usable_days(features, labels, T, phase.test, require_label=False)
    preds = {}
    for t in days:
        window = features[:, t - T + 1:t + 1, :]
        preds[t] = model.forward(window, graph, cache).data.copy()
    return preds


def stage_predict(args, settings: RunSettings, out: Path) -> list[str]:
    phases = _load_phases(out)
    if args.phase is not None:
        phases = [p for p in phases if p.phase_id == args.phase]
    artifacts = []
    for phase in phases:
        preds = _predict_phase(out, settings, phase)
        name = f"predictions_phase{phase.phase_id}.npz"
        np.savez(out / name, days=np.array(sorted(preds)),
                 values=np.stack([preds[d] for d in sorted(preds)]))
        artifacts.append(name)
    return artifacts


def stage_backtest(args, settings: RunSettings, out: Path) -> list[str]:
    panel = _load_panel(out)
    phases = _load_phases(out)
    if args.phase is not None:
        phases = [p for p in phases if p.phase_id == args.phase]
    with np.load(_require(out, "features.npz")) as z:
        labels = z["labels"]
    predictions = {}
    for phase in phases:
        name = f"predictions_phase{phase.phase_id}.npz"
        if not (out / name).exists():
            preds = _predict_phase(out, settings, phase)
        else:
            with np.load(out / name) as z:
                preds = {int(d): v for d, v in zip(z["days"], z["values"])}
        predictions[phase.phase_id] = preds
    report = bt.run_rolling_backtest(phases, predictions, labels, panel,
                                     settings.risk, repeats=args.repeats,
                                     seed=settings.train.seed)
    report.meta["ablation"] = vars(settings.model.ablation)
    (out / "report.json").write_text(report.to_json())
    artifacts = ["report.json"]
    artifacts += _emit_report_files(report, phases, predictions, panel,
                                    settings, out)
    return artifacts


def _emit_report_files(report: bt.BacktestReport, phases, predictions, panel,
                       settings: RunSettings, out: Path) -> list[str]:
    try:
        (out / "report.csv").write_text(report.to_csv())
        artifacts = ["report.csv"]
        cum_lines = ["phase,day,cumulative_return"]
        cum = 1.0
        for phase in phases:
            rebalance_src = predictions[phase.phase_id]
            rebalance = {d: rebalance_src[d] for d in
                         sorted(rebalance_src)[::settings.risk.rebalance_days]}
            curve = bt.simulate_portfolio(rebalance, panel, phase.test,
                                          settings.risk)
            name = f"equity_phase{phase.phase_id}.csv"
            lines = ["day,nv"] + [f"{d},{float(v)!r}" for d, v in
                                  zip(curve.days, curve.nav)]
            (out / name).write_text("\n".join(lines) + "\n")
            artifacts.append(name)
            # plot-ready chained cumulative return across phases
            for d, v in zip(curve.days, curve.nav):
                cum_lines.append(
                    f"{phase.phase_id},{d},{float(cum * v / curve.nav[0] - 1.0)!r}")
            cum *= curve.nav[-1] / curve.nav[0]
        (out / "cumulative_return.csv").write_text("\n".join(cum_lines) + "\n")
        artifacts.append("cumulative_return.csv")
        return artifacts
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def stage_report(args, settings: RunSettings, out: Path) -> list[str]:
    raw = json.loads(_require(out, "report.json").read_text())
    if not raw.get("phases"):
        raise IoFailure("report has no phases; nothing to emit")
    phases_m = [bt.PhaseMetrics(**{k: v for k, v in p.items()})
                for p in raw["phases"]]
    report = bt.BacktestReport(phases=phases_m, meta=raw.get("meta", {}))
    try:
        (out / "report.csv").write_text(report.to_csv())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return ["report.csv"]


# ----------------------------------------------------------------------

STAGES = {
    "ingest": stage_ingest,
    "features": stage_features,
    "graph": stage_graph,
    "train": stage_train,
    "predict": stage_predict,
    "backtest": stage_backtest,
    "report": stage_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgwave",
        description="Stock movement prediction pipeline with hypergraph "
                    "wavelet convolution")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--data", help="OHLCV CSV path")
    parser.add_argument("--meta", help="symbol metadata CSV path")
    parser.add_argument("--config", help="YAML config path")
    parser.add_argument("--phase", type=int, help="restrict to one phase id")
    parser.add_argument("--seed", type=int, help="override training seed")
    parser.add_argument("--ablation",
                        choices=["est1", "est2", "est3", "est4"],
                        help="reduced model variant")
    parser.add_argument("--repeats", type=int, default=1,
                        help="simulation repeats per phase")
    parser.add_argument("--out", default="runs/default",
                        help="run directory for artifacts")
    parser.add_argument("--parallel-phases", type=int, default=1)
    parser.add_argument("--dump-indicators", action="store_true",
                        help="also write per-day indicator values as CSV")
    return parser


def run_pipeline(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args.config, ablation=args.ablation,
                                 seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command not in STAGES:
            raise UnknownCommand(args.command)
        artifacts = STAGES[args.command](args, settings, out)
        inputs = {}
        for p in (args.data, args.meta, args.config):
            if p:
                inputs[str(p)] = _sha256(Path(p))
        _update_manifest(out, settings, args.command, inputs, artifacts)
        return EXIT_OK
    except (ConfigInvalid, UnknownCommand) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, UpstreamArtifactMissing) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HgwaveError as exc:
        if exc.__class__.__name__ in ("MissingColumn", "EmptyPanel",
                                      "NonPositivePrice", "ZeroPrice",
                                      "CalendarTooShort"):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run_pipeline(sys.argv[1:]))


if __name__ == "__main__":
    main()
