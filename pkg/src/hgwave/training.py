"""Phase-level training: RMSE objective, Adam updates, early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import hypergraph as hg
from .autodiff import Tensor
from .errors import EmptyBatch, NoTrainableDays
from .model import ModelConfig, PredictionModel
from .market_data import PhaseSplit

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    epoch: int
    valid_rmse: float
    config: dict = field(default_factory=dict)


def rmse_loss(predictions: Tensor, labels: np.ndarray) -> Tensor:
    """sqrt(mean((pred - label)^2)) over one cross-section."""
    if labels.size == 0:
        raise EmptyBatch("no labels in batch")
    diff = ad.sub(predictions, Tensor(labels))
    return ad.sqrt(ad.mean(ad.mul(diff, diff)))


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def usable_days(features: np.ndarray, labels: np.ndarray, lookback: int,
                day_range: tuple[int, int], require_label: bool = True
                ) -> list[int]:
    """Day indices whose full feature window is finite (and, for
    training, whose label exists)."""
    lo, hi = day_range
    days = []
    for t in range(max(lo, lookback - 1), hi):
        window = features[:, t - lookback + 1:t + 1, :]
        if not np.all(np.isfinite(window)):
            continue
        if require_label and not np.all(np.isfinite(labels[:, t])):
            continue
        days.append(t)
    return days


def _evaluate(model: PredictionModel, features, labels, days, graph, cache
              ) -> float:
    losses = []
    T = model.cfg.temporal.lookback
    for t in days:
        window = features[:, t - T + 1:t + 1, :]
        pred = model.forward(window, graph, cache)
        losses.append(rmse_loss(pred, labels[:, t]).item())
    return float(np.mean(losses)) if losses else np.inf


def train_phase(features: np.ndarray, labels: np.ndarray, phase: PhaseSplit,
                model_cfg: ModelConfig, train_cfg: TrainConfig,
                graph: hg.Hypergraph | None = None,
                callback=None) -> tuple[PredictionModel, Checkpoint]:
    """Train one rolling phase and return the best-validation state.

    `features` is the (stocks, days, channels) tensor for the whole
    panel; day batches cover the full cross-section at one timestep.
    Training days are visited in a seeded shuffled order per epoch and
    the checkpoint with the lowest validation RMSE wins; training stops
    after `patience` epochs without improvement.
    """
    n, _, n_feat = features.shape
    model = PredictionModel(model_cfg, n, n_feat, seed=train_cfg.seed)
    T = model_cfg.temporal.lookback

    train_days = usable_days(features, labels, T, phase.train)
    valid_days = usable_days(features, labels, T, phase.valid)
    if not train_days:
        raise NoTrainableDays(f"phase {phase.phase_id}: no usable training day")

    cache = None
    if graph is not None and model_cfg.ablation.fourier_basis:
        cache = hg.spectral_prepare(graph, with_eig=True)

    params = model.parameters()
    opt = Adam(params, lr=train_cfg.learning_rate)
    rng = np.random.default_rng(train_cfg.seed)

    best: Checkpoint | None = None
    stall = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train_days))
        epoch_losses = []
        for idx in order:
            t = train_days[idx]
            window = features[:, t - T + 1:t + 1, :]
            opt.zero_grad()
            pred = model.forward(window, graph, cache)
            loss = rmse_loss(pred, labels[:, t])
            ad.backward(loss)
            opt.step()
            epoch_losses.append(loss.item())

        valid_rmse = (_evaluate(model, features, labels, valid_days, graph,
                                cache) if valid_days
                      else float(np.mean(epoch_losses)))
        improved = best is None or valid_rmse < best.valid_rmse
        if improved:
            best = Checkpoint(
                params={k: p.data.copy() for k, p in params.items()},
                epoch=epoch, valid_rmse=valid_rmse,
                config=model_cfg.to_dict())
            stall = 0
        else:
            stall += 1
        if callback:
            callback(epoch, float(np.mean(epoch_losses)), valid_rmse)
        logger.debug("phase %d epoch %d train %.5f valid %.5f",
                     phase.phase_id, epoch, np.mean(epoch_losses), valid_rmse)
        if train_cfg.patience == 0 or stall >= train_cfg.patience:
            break

    for name, value in best.params.items():
        params[name].data[...] = value
    return model, best
