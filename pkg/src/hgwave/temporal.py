"""Per-stock temporal embeddings.

Pipeline per training step: input projection -> 1-D convolution over the
lookback window -> LSTM whose weight matrices are generated per stock
from a learnable memory vector -> self-excited temporal attention. The
result is one embedding row per stock.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch, WindowTooShort

GATE_ORDER = ("i", "f", "g", "o")


@dataclass
class TemporalConfig:
    lookback: int = 20          # window length T
    proj_dim: int = 64          # width after the input projection
    conv_channels: int = 64     # 1D-CNN output channels
    kernel_size: int = 3
    hidden_dim: int = 64        # LSTM hidden size d
    memory_dim: int = 32        # per-stock memory vector size m
    dgf_hidden: int = 64        # width of the generator's hidden layer

    @property
    def seq_len(self) -> int:
        return self.lookback - self.kernel_size + 1


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    scale = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def init_temporal_params(cfg: TemporalConfig, n_stocks: int, n_features: int,
                         rng: np.random.Generator,
                         shared_memory: bool = False) -> dict[str, Tensor]:
    """Create all temporal-path parameters.

    With `shared_memory` the bank holds a single vector broadcast to
    every stock, collapsing the generated filters to one common LSTM.

    Each tensor draws from its own child stream so the draw for one
    parameter (e.g. a memory bank whose shape depends on the variant)
    never shifts the values of the others.
    """
    d, m = cfg.hidden_dim, cfg.memory_dim
    d_in = cfg.conv_channels
    flat = 4 * d * d_in + 4 * d * d
    n_mem = 1 if shared_memory else n_stocks
    proj_rng, conv_rng, mem_rng, dgf1_rng, dgf2_rng, att_rng = rng.spawn(6)
    params = {
        "proj_w": uniform_init(proj_rng, (n_features, cfg.proj_dim),
                               n_features),
        "proj_b": Tensor(np.zeros(cfg.proj_dim), requires_grad=True),
        "conv_k": uniform_init(conv_rng, (cfg.conv_channels, cfg.proj_dim,
                                          cfg.kernel_size),
                               cfg.proj_dim * cfg.kernel_size),
        "conv_b": Tensor(np.zeros(cfg.conv_channels), requires_grad=True),
        "memories": Tensor(mem_rng.normal(0.0, 0.1, size=(n_mem, m)),
                           requires_grad=True),
        "dgf_w1": uniform_init(dgf1_rng, (m, cfg.dgf_hidden), m),
        "dgf_b1": Tensor(np.zeros(cfg.dgf_hidden), requires_grad=True),
        "dgf_w2": uniform_init(dgf2_rng, (cfg.dgf_hidden, flat),
                               cfg.dgf_hidden),
        "dgf_b2": Tensor(np.zeros(flat), requires_grad=True),
        "lstm_bias": Tensor(np.zeros(4 * d), requires_grad=True),
        "att_w": uniform_init(att_rng, (d, d), d),
        "hawkes_eps": Tensor(np.zeros(cfg.seq_len), requires_grad=True),
        "hawkes_gamma_raw": Tensor(np.zeros(()), requires_grad=True),
    }
    return params


def project_input(features: Tensor, proj_w: Tensor, proj_b: Tensor) -> Tensor:
    """Shared per-day linear map + tanh over the feature channels.

    features: (n, T, F) -> (n, T, proj_dim).
    """
    if features.shape[-1] != proj_w.shape[0]:
        raise ShapeMismatch(
            f"feature width {features.shape[-1]} vs projection {proj_w.shape[0]}")
    return ad.tanh(ad.add(ad.matmul(features, proj_w), proj_b))


def conv1d_local_trends(projected: Tensor, kernels: Tensor,
                        bias: Tensor) -> Tensor:
    """Valid 1-D convolution over time, stride 1.

    projected: (n, T, C) -> (n, T - k + 1, c_out).
    """
    T = projected.shape[1]
    k = kernels.shape[-1]
    if T < k:
        raise WindowTooShort(f"window {T} shorter than kernel {k}")
    x = ad.transpose(projected, (0, 2, 1))            # (n, C, T)
    out = ad.conv1d(x, kernels, bias)                 # (n, c_out, T')
    return ad.transpose(out, (0, 2, 1))


def dgf_generate(memories: Tensor, params: dict[str, Tensor],
                 cfg: TemporalConfig, n_stocks: int
                 ) -> tuple[Tensor, Tensor]:
    """Map memory vectors through the 2-layer generator to LSTM weights.

    Returns stacked input-to-gate matrices W (n, 4d, d_in) and
    hidden-to-gate matrices U (n, 4d, d), gate order (i, f, g, o).
    Biases are shared global parameters, not generated.
    """
    d, d_in = cfg.hidden_dim, cfg.conv_channels
    if memories.shape[-1] != params["dgf_w1"].shape[0]:
        raise ShapeMismatch("memory width does not match generator input")
    hidden = ad.tanh(ad.add(ad.matmul(memories, params["dgf_w1"]),
                            params["dgf_b1"]))
    flat = ad.add(ad.matmul(hidden, params["dgf_w2"]), params["dgf_b2"])
    n_mem = memories.shape[0]
    w_flat = flat[:, :4 * d * d_in]
    u_flat = flat[:, 4 * d * d_in:]
    W = ad.reshape(w_flat, (n_mem, 4 * d, d_in))
    U = ad.reshape(u_flat, (n_mem, 4 * d, d))
    if n_mem == 1 and n_stocks > 1:
        # shared bank: broadcast one generated filter set to all stocks
        W = ad.concat([W] * n_stocks, axis=0)
        U = ad.concat([U] * n_stocks, axis=0)
    return W, U


def lstm_forward(x_seq: Tensor, W: Tensor, U: Tensor, bias: Tensor,
                 hidden_dim: int) -> list[Tensor]:
    """Run the LSTM cell over a window for all stocks at once.

    x_seq: (n, T', d_in); W: (n, 4d, d_in); U: (n, 4d, d); bias: (4d,).
    h0 = c0 = 0. Returns the list of hidden states, each (n, d).
    """
    n, T, _ = x_seq.shape
    d = hidden_dim
    h = Tensor(np.zeros((n, d)))
    c = Tensor(np.zeros((n, d)))
    states: list[Tensor] = []
    for t in range(T):
        x_t = ad.reshape(x_seq[:, t, :], (n, -1, 1))          # (n, d_in, 1)
        pre = ad.add(ad.add(ad.matmul(W, x_t),
                            ad.matmul(U, ad.reshape(h, (n, d, 1)))),
                     ad.reshape(bias, (4 * d, 1)))
        pre = ad.reshape(pre, (n, 4 * d))
        i = ad.sigmoid(pre[:, 0 * d:1 * d])
        f = ad.sigmoid(pre[:, 1 * d:2 * d])
        g = ad.tanh(pre[:, 2 * d:3 * d])
        o = ad.sigmoid(pre[:, 3 * d:4 * d])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        states.append(h)
    return states


def hawkes_attention(states: list[Tensor], att_w: Tensor, eps: Tensor,
                     gamma_raw: Tensor) -> Tensor:
    """Attention over the hidden-state window with self-excitation.

    Scores are h_k . (W h_last); the aggregated output adds, per lag k,
    eps_k * max(alpha_k h_k, 0) * exp(-gamma * alpha_k h_k) elementwise.
    gamma is kept non-negative through a softplus reparameterization.
    With eps identically zero this reduces exactly to plain attention.
    """
    H = ad.stack(states, axis=1)                 # (n, T', d)
    h_last = states[-1]                          # (n, d)
    query = ad.matmul(h_last, ad.transpose(att_w, (1, 0)))   # (n, d)
    scores = ad.sum_(ad.mul(H, ad.reshape(query, (query.shape[0], 1, -1))),
                     axis=2)                     # (n, T')
    alpha = ad.softmax(scores, axis=1)
    weighted = ad.mul(H, ad.reshape(alpha, (*alpha.shape, 1)))  # alpha_k h_k
    base = ad.sum_(weighted, axis=1)             # (n, d)
    gamma = ad.softplus(gamma_raw)
    decay = ad.exp(ad.mul(weighted, ad.mul(gamma, -1.0)))
    excitation = ad.sum_(
        ad.mul(ad.reshape(eps, (1, -1, 1)), ad.mul(ad.relu(weighted), decay)),
        axis=1)
    return ad.add(base, excitation)


def build_temporal_embedding(features: Tensor, params: dict[str, Tensor],
                             cfg: TemporalConfig) -> Tensor:
    """Full temporal path: (n, T, F) feature windows -> (n, d) embeddings."""
    n = features.shape[0]
    projected = project_input(features, params["proj_w"], params["proj_b"])
    compressed = conv1d_local_trends(projected, params["conv_k"],
                                     params["conv_b"])
    W, U = dgf_generate(params["memories"], params, cfg, n)
    states = lstm_forward(compressed, W, U, params["lstm_bias"],
                          cfg.hidden_dim)
    return hawkes_attention(states, params["att_w"], params["hawkes_eps"],
                            params["hawkes_gamma_raw"])
