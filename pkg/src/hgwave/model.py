"""End-to-end prediction model: temporal path, hypergraph path, head.

Ablation switches reproduce the four reduced variants: temporal-only
prediction, a single shared LSTM instead of per-stock generated
weights, industry-only hypergraph, and exact eigenbasis convolution
instead of the polynomial path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import hypergraph as hg
from . import temporal as tp
from .autodiff import Tensor
from .hypergraph import ConvLayerParams, Hypergraph, SpectralCache


@dataclass
class AblationFlags:
    no_hypergraph: bool = False     # temporal features straight to the head
    no_dgf: bool = False            # one shared LSTM weight set
    no_corr_augment: bool = False   # industry hyperedges only
    fourier_basis: bool = False     # eigenbasis filter instead of polynomial

    @classmethod
    def from_name(cls, name: str | None) -> "AblationFlags":
        mapping = {
            None: cls(),
            "est1": cls(no_hypergraph=True),
            "est2": cls(no_dgf=True),
            "est3": cls(no_corr_augment=True),
            "est4": cls(fourier_basis=True),
        }
        key = name.lower() if isinstance(name, str) else name
        if key not in mapping:
            raise ValueError(f"unknown ablation: {name}")
        return mapping[key]


@dataclass
class ModelConfig:
    temporal: tp.TemporalConfig = field(default_factory=tp.TemporalConfig)
    conv_layers: int = 2
    poly_order: int = 3
    wavelet_scale: float = 1.0
    head_hidden: int = 32
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def to_dict(self) -> dict:
        return asdict(self)


class PredictionModel:
    """Holds all parameters and runs the forward pass for one day-batch."""

    def __init__(self, cfg: ModelConfig, n_stocks: int, n_features: int,
                 seed: int = 0):
        self.cfg = cfg
        self.n_stocks = n_stocks
        self.n_features = n_features
        rng = np.random.default_rng(seed)
        self.temporal_params = tp.init_temporal_params(
            cfg.temporal, n_stocks, n_features, rng,
            shared_memory=cfg.ablation.no_dgf)
        d = cfg.temporal.hidden_dim
        self.conv_layers: list[ConvLayerParams] = []
        if not cfg.ablation.no_hypergraph:
            for _ in range(cfg.conv_layers):
                self.conv_layers.append(hg.init_conv_layer(
                    rng, d, d, K=cfg.poly_order, s=cfg.wavelet_scale))
        head_in = d if cfg.ablation.no_hypergraph else 2 * d
        scale = 1.0 / np.sqrt(head_in)
        self.head = {
            "w1": Tensor(rng.uniform(-scale, scale,
                                     size=(head_in, cfg.head_hidden)),
                         requires_grad=True),
            "b1": Tensor(np.zeros(cfg.head_hidden), requires_grad=True),
            "w2": Tensor(rng.uniform(-1.0 / np.sqrt(cfg.head_hidden),
                                     1.0 / np.sqrt(cfg.head_hidden),
                                     size=(cfg.head_hidden, 1)),
                         requires_grad=True),
            "b2": Tensor(np.zeros(1), requires_grad=True),
        }

    # ------------------------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        params = {f"temporal.{k}": v for k, v in self.temporal_params.items()}
        for i, layer in enumerate(self.conv_layers):
            params[f"hconv{i}.P"] = layer.P
            params[f"hconv{i}.theta"] = layer.theta_coeffs
            params[f"hconv{i}.attn_a"] = layer.attn_a
        params.update({f"head.{k}": v for k, v in self.head.items()})
        return params

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def tie_memories(self):
        """Collapse the memory bank to one shared vector (values taken
        from the first row). Makes the full model computationally
        identical to the shared-LSTM variant."""
        mem = self.temporal_params["memories"]
        self.temporal_params["memories"] = Tensor(
            mem.data[:1].copy(), requires_grad=True)

    # ------------------------------------------------------------------
    def forward(self, features: np.ndarray | Tensor,
                graph: Hypergraph | None = None,
                cache: SpectralCache | None = None) -> Tensor:
        """features: (n, T, F) window ending at the prediction day.
        Returns per-stock scalar predictions, shape (n,)."""
        feats = features if isinstance(features, Tensor) else Tensor(features)
        z_t = tp.build_temporal_embedding(feats, self.temporal_params,
                                          self.cfg.temporal)
        if self.cfg.ablation.no_hypergraph:
            z_h = None
        else:
            if graph is None:
                raise ValueError("hypergraph required unless ablated away")
            x = z_t
            for layer in self.conv_layers:
                if self.cfg.ablation.fourier_basis:
                    if cache is None or cache.eigvals is None:
                        cache = hg.spectral_prepare(graph, with_eig=True)
                    x = hg.fourier_hconv(x, cache, layer)
                else:
                    a_hat = hg.hyperedge_attention(x, graph, layer)
                    x = hg.wavelet_hconv(x, graph, layer, A_hat=a_hat)
            z_h = x
        return hg.predict_head(z_t, z_h, self.head["w1"], self.head["b1"],
                               self.head["w2"], self.head["b2"])

    # ------------------------------------------------------------------
    def save(self, path, extra: dict | None = None):
        meta = {"n_stocks": self.n_stocks, "n_features": self.n_features}
        if extra:
            meta.update(extra)
        ad.save_params(path, self.parameters(), extra=meta)

    def load(self, path) -> dict:
        params, extra = ad.load_params(path)
        own = self.parameters()
        if set(params) != set(own):
            raise ValueError("checkpoint parameter names do not match model")
        for name, tensor in params.items():
            if tensor.shape != own[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            own[name].data[...] = tensor.data
        return extra
