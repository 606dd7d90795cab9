"""Market hypergraph construction and spectral convolution layers.

Hyperedges come from industry membership plus lead-lag price-correlation
clusters. Convolution runs either through a truncated polynomial in the
normalized incidence operator (the production path) or through an exact
eigenbasis heat-kernel filter (ablation and verification oracle).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    DecompositionFailed,
    InsufficientHistory,
    ShapeMismatch,
    ZeroDegreeVertex,
)

logger = logging.getLogger(__name__)


@dataclass
class Hyperedge:
    members: tuple[int, ...]
    weight: float
    source: str = "industry"      # industry | correlation


@dataclass
class Hypergraph:
    n: int
    edges: list[Hyperedge]

    @property
    def incidence(self) -> np.ndarray:
        A = np.zeros((self.n, len(self.edges)))
        for j, e in enumerate(self.edges):
            A[list(e.members), j] = 1.0
        return A

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.edges])

    def normalize_weights(self):
        total = sum(e.weight for e in self.edges)
        if total > 0:
            for e in self.edges:
                e.weight /= total

    def to_json(self, symbols: list[str]) -> str:
        payload = {"edges": [
            {"members": [symbols[i] for i in e.members],
             "weight": e.weight, "source": e.source}
            for e in self.edges]}
        return json.dumps(payload, indent=2)


@dataclass
class SpectralCache:
    dv: np.ndarray                 # vertex degrees
    de: np.ndarray                 # hyperedge degrees
    theta: np.ndarray              # Dv^-1/2 A W De^-1 A^T Dv^-1/2, symmetrized
    laplacian: np.ndarray          # I - theta
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None


@dataclass
class ConvLayerParams:
    P: Tensor                      # d_in x d_out transform
    theta_coeffs: Tensor           # polynomial coefficients, length K+1
    attn_a: Tensor                 # attention vector, length 2 * d_out
    K: int = 3
    s: float = 1.0


@dataclass
class CorrelationConfig:
    max_lag: int = 5
    threshold: float = 0.6
    min_cluster: int = 2
    lookback_days: int = 252
    min_history: int = 60


def heat_series_coefficients(K: int, s: float) -> np.ndarray:
    """Initial polynomial coefficients s^k e^{-s} / k!.

    With the operator's eigenvalues in [0, 1] the series reproduces the
    exact heat-kernel filter as K grows.
    """
    coeffs = np.empty(K + 1)
    term = np.exp(-s)
    for k in range(K + 1):
        coeffs[k] = term
        term *= s / (k + 1)
    return coeffs


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------

def build_industry_hypergraph(symbols: list[str], meta: dict[str, dict],
                              fallback_caps: dict[str, float] | None = None
                              ) -> Hypergraph:
    """One hyperedge per industry, weighted by member market-cap share.

    Symbols without a market cap use `fallback_caps` (typically mean
    dollar volume over the training window); single-stock industries
    keep their singleton edge so no vertex is isolated.
    """
    caps = {}
    for sym in symbols:
        cap = meta.get(sym, {}).get("market_cap")
        if cap is None:
            cap = (fallback_caps or {}).get(sym, 1.0)
        caps[sym] = cap
    total = sum(caps.values())
    by_industry: dict[str, list[int]] = {}
    for i, sym in enumerate(symbols):
        industry = meta.get(sym, {}).get("industry", f"_solo_{sym}")
        by_industry.setdefault(industry, []).append(i)
    edges = [
        Hyperedge(members=tuple(members),
                  weight=sum(caps[symbols[i]] for i in members) / total,
                  source="industry")
        for industry, members in sorted(by_industry.items())
    ]
    return Hypergraph(n=len(symbols), edges=edges)


def lead_lag_correlation(r_i: np.ndarray, r_j: np.ndarray,
                         max_lag: int) -> tuple[float, int]:
    """Best absolute-lag Pearson correlation between two return series."""
    best, best_lag = -np.inf, 0
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            a, b = r_i[lag:], r_j[:len(r_j) - lag]
        else:
            a, b = r_i[:len(r_i) + lag], r_j[-lag:]
        if len(a) < 3 or a.std() == 0 or b.std() == 0:
            continue
        rho = float(np.corrcoef(a, b)[0, 1])
        if rho > best:
            best, best_lag = rho, lag
    return best, best_lag


def augment_with_correlation(closes: np.ndarray, symbols: list[str],
                             meta: dict[str, dict],
                             cfg: CorrelationConfig | None = None,
                             fallback_caps: dict[str, float] | None = None
                             ) -> list[Hyperedge]:
    """Cluster stocks whose trailing returns show strong lead-lag
    correlation; each connected component of size >= min_cluster becomes
    a hyperedge. `closes` is (n, days) ending at the phase start."""
    cfg = cfg or CorrelationConfig()
    n, T = closes.shape
    if T < cfg.min_history:
        raise InsufficientHistory(
            f"need >= {cfg.min_history} days of history, got {T}")
    closes = closes[:, -cfg.lookback_days:]
    returns = np.diff(closes, axis=1) / closes[:, :-1]

    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            rho, _ = lead_lag_correlation(returns[i], returns[j], cfg.max_lag)
            if rho >= cfg.threshold:
                graph.add_edge(i, j)

    caps = {}
    for sym in symbols:
        cap = meta.get(sym, {}).get("market_cap")
        if cap is None:
            cap = (fallback_caps or {}).get(sym, 1.0)
        caps[sym] = cap
    total = sum(caps.values())

    edges = []
    for comp in sorted(nx.connected_components(graph), key=min):
        if len(comp) >= cfg.min_cluster:
            members = tuple(sorted(comp))
            weight = sum(caps[symbols[i]] for i in members) / total
            edges.append(Hyperedge(members=members, weight=weight,
                                   source="correlation"))
    return edges


def build_market_hypergraph(symbols, meta, closes=None, corr_cfg=None,
                            fallback_caps=None,
                            use_correlation: bool = True) -> Hypergraph:
    """Industry hypergraph, optionally augmented with correlation edges.
    Edge weights are renormalized to sum to 1."""
    h = build_industry_hypergraph(symbols, meta, fallback_caps)
    if use_correlation and closes is not None:
        h.edges.extend(augment_with_correlation(
            closes, symbols, meta, corr_cfg, fallback_caps))
    h.normalize_weights()
    return h


# ----------------------------------------------------------------------
# spectral preparation
# ----------------------------------------------------------------------

def spectral_prepare(h: Hypergraph, with_eig: bool = False) -> SpectralCache:
    A = h.incidence
    w = h.weights
    dv = A @ w
    de = A.sum(axis=0)
    if np.any(dv <= 0):
        raise ZeroDegreeVertex("hypergraph has a zero-degree vertex")
    dv_isqrt = 1.0 / np.sqrt(dv)
    B = (A * w[None, :] / de[None, :]) @ A.T
    theta = dv_isqrt[:, None] * B * dv_isqrt[None, :]
    theta = 0.5 * (theta + theta.T)
    lap = np.eye(h.n) - theta
    cache = SpectralCache(dv=dv, de=de, theta=theta, laplacian=lap)
    if with_eig:
        try:
            vals, vecs = np.linalg.eigh(lap)
        except np.linalg.LinAlgError as exc:
            raise DecompositionFailed(str(exc)) from exc
        cache.eigvals, cache.eigvecs = vals, vecs
    return cache


# ----------------------------------------------------------------------
# convolution layers
# ----------------------------------------------------------------------

def init_conv_layer(rng: np.random.Generator, d_in: int, d_out: int,
                    K: int = 3, s: float = 1.0) -> ConvLayerParams:
    scale = 1.0 / np.sqrt(d_in)
    return ConvLayerParams(
        P=Tensor(rng.uniform(-scale, scale, size=(d_in, d_out)),
                 requires_grad=True),
        theta_coeffs=Tensor(heat_series_coefficients(K, s),
                            requires_grad=True),
        attn_a=Tensor(rng.uniform(-scale, scale, size=(2 * d_out,)),
                      requires_grad=True),
        K=K, s=s)


def hyperedge_attention(X: Tensor, h: Hypergraph,
                        params: ConvLayerParams) -> Tensor:
    """Attention coefficients over each stock's incident hyperedges.

    The hyperedge feature is the unweighted mean of its members' rows.
    Returns a tensor with the sparsity pattern of the incidence matrix
    whose rows are softmax-normalized over incident edges.
    """
    A = h.incidence
    agg = A.T / A.sum(axis=0)[:, None]             # (|E|, n) mean weights
    Px = ad.matmul(X, params.P)                    # (n, d)
    Pe = ad.matmul(ad.matmul(Tensor(agg), X), params.P)   # (|E|, d)
    d = Px.shape[1]
    a1 = ad.reshape(params.attn_a[:d], (d, 1))
    a2 = ad.reshape(params.attn_a[d:], (d, 1))
    logits = ad.add(ad.matmul(Px, a1),
                    ad.transpose(ad.matmul(Pe, a2), (1, 0)))   # (n, |E|)
    logits = ad.leaky_relu(logits)
    return ad.softmax(logits, axis=1, mask=A)


def _theta_from_incidence(A_hat: Tensor, h: Hypergraph) -> Tensor:
    """Rebuild the normalized operator from an (attention-weighted)
    incidence, reusing the hypergraph's edge weights and the same degree
    normalization as the static operator."""
    w = h.weights
    de = h.incidence.sum(axis=0)
    dv = ad.matmul(A_hat, Tensor(w.reshape(-1, 1)))            # (n, 1)
    dv_isqrt = ad.pow_(dv, -0.5)
    scaled = ad.mul(A_hat, Tensor((w / de).reshape(1, -1)))
    B = ad.matmul(scaled, ad.transpose(A_hat, (1, 0)))
    return ad.mul(ad.mul(B, dv_isqrt),
                  ad.transpose(dv_isqrt, (1, 0)))


def wavelet_hconv(Z: Tensor, h: Hypergraph, params: ConvLayerParams,
                  A_hat: Tensor | None = None,
                  cache: SpectralCache | None = None) -> Tensor:
    """Polynomial spectral convolution without eigendecomposition.

    Z' = LReLU( sum_k theta_k * Op^k * Z * P ) where Op is the
    normalized operator, rebuilt from the attention incidence when one
    is given. Powers are applied as repeated mat-vec products.
    """
    if A_hat is not None:
        op = _theta_from_incidence(A_hat, h)
    else:
        cache = cache or spectral_prepare(h)
        op = Tensor(cache.theta)
    y = ad.matmul(Z, params.P)
    acc = ad.mul(y, params.theta_coeffs[0])
    for k in range(1, params.K + 1):
        y = ad.matmul(op, y)
        acc = ad.add(acc, ad.mul(y, params.theta_coeffs[k]))
    return ad.leaky_relu(acc)


def fourier_hconv(Z: Tensor, cache: SpectralCache,
                  params: ConvLayerParams) -> Tensor:
    """Exact heat-kernel filtering in the Laplacian eigenbasis.

    Serves as the Fourier-basis ablation and as the oracle for the
    polynomial path. Z' = LReLU(U e^{-s Lambda} U^T Z P).
    """
    if cache.eigvals is None or cache.eigvecs is None:
        raise DecompositionFailed("spectral cache lacks an eigendecomposition")
    U, lam = cache.eigvecs, cache.eigvals
    filt = U @ np.diag(np.exp(-params.s * lam)) @ U.T
    return ad.leaky_relu(ad.matmul(ad.matmul(Tensor(filt), Z), params.P))


def predict_head(Z_T: Tensor, Z_H: Tensor | None, w1: Tensor, b1: Tensor,
                 w2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer regression head on [Z_T || Z_H]; no output activation.
    Returns one scalar per stock."""
    X = Z_T if Z_H is None else ad.concat([Z_T, Z_H], axis=1)
    if X.shape[1] != w1.shape[0]:
        raise ShapeMismatch(f"head input {X.shape[1]} vs weights {w1.shape[0]}")
    hidden = ad.leaky_relu(ad.add(ad.matmul(X, w1), b1))
    out = ad.add(ad.matmul(hidden, w2), b2)
    return ad.reshape(out, (-1,))
