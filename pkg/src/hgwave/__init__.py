"""Stock movement prediction with per-stock generative LSTM filters and
wavelet hypergraph attention convolution, plus rolling backtesting."""

__version__ = "0.1.0"
