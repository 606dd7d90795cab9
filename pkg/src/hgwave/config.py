"""YAML run configuration.

Schema (all keys optional, defaults shown in the dataclasses):

    data:        {lookahead: 5, normalization_window: 20}
    indicators:  IndicatorConfig fields (ma_windows, rsi_window, ...)
    model:       TemporalConfig fields plus conv_layers, poly_order,
                 wavelet_scale, head_hidden
    phases:      PhaseConfig fields (train_months, valid_months, ...)
    train:       TrainConfig fields (learning_rate, epochs, patience, seed)
    correlation: CorrelationConfig fields (max_lag, threshold, ...)
    risk:        RiskConfig fields (trailing_stop, take_profit, top_k, ...)

CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .backtest import RiskConfig
from .errors import ConfigInvalid
from .hypergraph import CorrelationConfig
from .market_data import PhaseConfig
from .indicators import IndicatorConfig
from .model import AblationFlags, ModelConfig
from .temporal import TemporalConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    lookahead: int = 5
    normalization_window: int = 20


@dataclass
class RunSettings:
    data: DataConfig = field(default_factory=DataConfig)
    indicators: IndicatorConfig = field(default_factory=IndicatorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    phases: PhaseConfig = field(default_factory=PhaseConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    coerced = {}
    for key, val in values.items():
        if isinstance(val, list):
            val = tuple(val)
        coerced[key] = val
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid [{section}] config: {exc}") from exc


def load_settings(path=None, ablation: str | None = None,
                  seed: int | None = None) -> RunSettings:
    raw = {}
    if path is not None:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise ConfigInvalid("config root must be a mapping")

    model_raw = dict(raw.get("model", {}))
    temporal_keys = {f.name for f in dataclasses.fields(TemporalConfig)}
    temporal_raw = {k: model_raw.pop(k) for k in list(model_raw)
                    if k in temporal_keys}
    model = _build(ModelConfig, model_raw, "model")
    model.temporal = _build(TemporalConfig, temporal_raw, "model")

    settings = RunSettings(
        data=_build(DataConfig, raw.get("data", {}), "data"),
        indicators=_build(IndicatorConfig, raw.get("indicators", {}),
                          "indicators"),
        model=model,
        phases=_build(PhaseConfig, raw.get("phases", {}), "phases"),
        train=_build(TrainConfig, raw.get("train", {}), "train"),
        correlation=_build(CorrelationConfig, raw.get("correlation", {}),
                           "correlation"),
        risk=_build(RiskConfig, raw.get("risk", {}), "risk"),
    )
    if ablation is not None:
        settings.model.ablation = AblationFlags.from_name(ablation)
    if seed is not None:
        settings.train.seed = seed
    return settings
