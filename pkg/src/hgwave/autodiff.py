"""Dense-tensor computation core with reverse-mode differentiation.

Tensors wrap float64 numpy arrays. Every operation on tracked tensors
records a backward closure; calling :func:`backward` on a scalar loss
propagates gradients to all tracked leaves in reverse topological order.
"""

from __future__ import annotations

import json
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    GraphConsumed,
    NonFiniteValue,
    NonScalarLoss,
    ShapeMismatch,
)

CHECKPOINT_FORMAT_VERSION = 1


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_consumed")

    def __init__(self, data, requires_grad: bool = False, _prev: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward: Callable[[], None] | None = None
        self._prev = _prev
        self._consumed = False

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # operators -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("operation produced NaN or Inf")


def _make(data, parents: Sequence[Tensor], backward: Callable[[Tensor], Callable]):
    """Build an op result; record the backward closure if any parent is tracked."""
    _check_finite(data)
    tracked = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=tracked,
                 _prev=tuple(p for p in parents if p.requires_grad))
    if tracked:
        out._backward = backward(out)
    return out


# ----------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad, b.shape))
        return run

    return _make(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-out.grad, b.shape))
        return run

    return _make(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * a.data, b.shape))
        return run

    return _make(data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-out.grad * a.data / (b.data ** 2), b.shape))
        return run

    return _make(data, (a, b), bw)


def pow_(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data ** exponent

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * exponent * a.data ** (exponent - 1))
        return run

    return _make(data, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def bw(out):
        def run():
            if a.requires_grad:
                ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
                a._accum(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
                b._accum(_unbroadcast(gb, b.shape))
        return run

    return _make(data, (a, b), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * out.data)
        return run

    return _make(data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad / a.data)
        return run

    return _make(data, (a,), bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * 0.5 / out.data)
        return run

    return _make(data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * out.data * (1.0 - out.data))
        return run

    return _make(data, (a,), bw)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * (1.0 - out.data ** 2))
        return run

    return _make(data, (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * (a.data > 0))
        return run

    return _make(data, (a,), bw)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    data = np.where(a.data > 0, a.data, slope * a.data)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad * np.where(a.data > 0, 1.0, slope))
        return run

    return _make(data, (a,), bw)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def bw(out):
        def run():
            if a.requires_grad:
                s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                             np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
                a._accum(out.grad * s)
        return run

    return _make(data, (a,), bw)


def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax, optionally restricted to a 0/1 mask.

    Masked-out positions receive probability 0 and pass no gradient.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != x.shape:
            raise ShapeMismatch(f"softmax mask {mask.shape} vs input {x.shape}")
        neg = np.where(mask > 0, x, -np.inf)
        m = np.max(neg, axis=axis, keepdims=True)
        e = np.where(mask > 0, np.exp(x - m), 0.0)
    else:
        m = np.max(x, axis=axis, keepdims=True)
        e = np.exp(x - m)
    denom = e.sum(axis=axis, keepdims=True)
    if np.any(denom == 0):
        raise ShapeMismatch("softmax over an empty masked index set")
    data = e / denom

    def bw(out):
        def run():
            if a.requires_grad:
                y = out.data
                g = out.grad
                dot = (g * y).sum(axis=axis, keepdims=True)
                a._accum(y * (g - dot))
        return run

    return _make(data, (a,), bw)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(out):
        def run():
            if a.requires_grad:
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                a._accum(np.broadcast_to(g, a.shape).copy())
        return run

    return _make(data, (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def take(a, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]

    def bw(out):
        def run():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                np.add.at(g, idx, out.grad)
                a._accum(g)
        return run

    return _make(data, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(out.grad.reshape(a.shape))
        return run

    return _make(data, (a,), bw)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def bw(out):
        def run():
            if a.requires_grad:
                a._accum(np.transpose(out.grad, inv))
        return run

    return _make(data, (a,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run():
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * out.grad.ndim
                    sl[axis] = slice(lo, hi)
                    t._accum(out.grad[tuple(sl)])
        return run

    return _make(data, ts, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in ts], axis=axis)

    def bw(out):
        def run():
            for i, t in enumerate(ts):
                if t.requires_grad:
                    t._accum(np.take(out.grad, i, axis=axis))
        return run

    return _make(data, ts, bw)


def conv1d(x, kernels, bias=None) -> Tensor:
    """Valid 1-D convolution with stride 1.

    x: (..., c_in, L); kernels: (c_out, c_in, k); bias: (c_out,) or None.
    Returns (..., c_out, L - k + 1). Built from matmul/add primitives, so
    its gradient needs no dedicated rule.
    """
    x = as_tensor(x)
    kernels = as_tensor(kernels)
    c_out, c_in, k = kernels.shape
    L = x.shape[-1]
    if L < k:
        raise ShapeMismatch(f"conv1d: input length {L} < kernel size {k}")
    Lo = L - k + 1
    out = None
    for j in range(k):
        sl = (Ellipsis, slice(None), slice(j, j + Lo))
        term = matmul(kernels[:, :, j], x[sl])
        out = term if out is None else add(out, term)
    if bias is not None:
        bias = as_tensor(bias)
        out = add(out, reshape(bias, (c_out, 1)))
    return out


# ----------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------

def backward(loss: Tensor):
    """Backpropagate from a scalar loss to all tracked leaves."""
    if loss.data.shape != ():
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.data.shape}")
    if loss._consumed:
        raise GraphConsumed("backward already ran on this graph")
    loss._consumed = True

    topo: list[Tensor] = []
    visited = set()
    stack_ = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for p in node._prev:
            if id(p) not in visited:
                stack_.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


# ----------------------------------------------------------------------
# verification and persistence helpers
# ----------------------------------------------------------------------

def grad_check(fn: Callable[[], Tensor], params: Iterable[Tensor],
               step: float = 1e-4) -> float:
    """Compare analytic gradients against central finite differences.

    `fn` rebuilds the scalar loss from the current parameter values.
    Relative error uses a max(1, |analytic|) denominator. Returns the
    maximum relative error over every coordinate of every parameter.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = fn()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    max_err = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn().item()
            flat[i] = orig - step
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            err = abs(numeric - gflat[i]) / max(1.0, abs(gflat[i]))
            max_err = max(max_err, err)
    return max_err


def save_params(path, params: dict[str, Tensor], extra: dict | None = None):
    """Write a named parameter map as versioned JSON (row-major values)."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w") as f:
        json.dump(payload, f)


def load_params(path) -> tuple[dict[str, Tensor], dict]:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ShapeMismatch(
            f"unsupported checkpoint format: {payload.get('format_version')}")
    params = {
        name: Tensor(np.array(rec["data"]).reshape(rec["shape"]),
                     requires_grad=True)
        for name, rec in payload["params"].items()
    }
    return params, payload.get("extra", {})
