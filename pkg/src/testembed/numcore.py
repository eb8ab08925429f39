"""Dense float32 tensors with a linear reverse-mode tape.

Every primitive computes its forward value with numpy and, when any input
requires a gradient, appends one record (output, inputs, vector-Jacobian
product) to the thread-local tape.  ``backward`` replays the tape in reverse
and returns gradients for the trainable leaves only, then clears the tape.
"""

from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateInputError, ParameterError, ShapeError, UsageError

# reductions with more terms than this accumulate in float64
LARGE_REDUCTION = 10_000

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class _State(threading.local):
    def __init__(self):
        self.records: list[tuple] = []
        self.grad_enabled = True
        self.dtype = np.dtype(np.float32)


_state = _State()


def default_dtype() -> np.dtype:
    return _state.dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily create tensors in ``dtype`` (float64 is used by gradient checks)."""
    old = _state.dtype
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = old


@contextlib.contextmanager
def no_grad():
    old = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = old


class Tape:
    """View over the current thread's operation record."""

    @staticmethod
    def records() -> list[tuple]:
        return _state.records

    @staticmethod
    def clear() -> None:
        _state.records.clear()

    @staticmethod
    def __len__() -> int:  # pragma: no cover - convenience
        return len(_state.records)


class Tensor:
    """An n-dimensional float array that may take part in differentiation.

    ``trainable`` marks leaves that receive an entry from :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "trainable", "grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, trainable: bool = False, name: str | None = None, requires_grad: bool | None = None):
        arr = np.asarray(data)
        if arr.dtype != _state.dtype:
            arr = arr.astype(_state.dtype)
        self.data = arr
        self.trainable = trainable
        self.requires_grad = trainable if requires_grad is None else requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic sugar
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
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, trainable=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    needs = _state.grad_enabled and any(p.requires_grad for p in parents)
    t = Tensor.__new__(Tensor)
    t.data = out
    t.trainable = False
    t.requires_grad = needs
    t.grad = None
    t.name = None
    if needs:
        _state.records.append((t, tuple(parents), vjp))
    return t


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _record(out, (a, b), lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _record(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _record(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def gelu(a) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF."""
    a = as_tensor(a)
    x = a.data
    cdf = ndtr(x).astype(x.dtype, copy=False)

    def vjp(g):
        pdf = (_INV_SQRT_2PI * np.exp(-0.5 * x * x)).astype(x.dtype, copy=False)
        return (g * (cdf + x * pdf),)

    return _record(x * cdf, (a,), vjp)


# ---------------------------------------------------------------- reductions

def _reduce_count(shape, axis) -> int:
    if axis is None:
        return int(np.prod(shape, dtype=np.int64))
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[ax] for ax in axes], dtype=np.int64))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    if _reduce_count(ad.shape, axis) > LARGE_REDUCTION:
        out = np.sum(ad, axis=axis, keepdims=keepdims, dtype=np.float64).astype(ad.dtype)
    else:
        out = np.sum(ad, axis=axis, keepdims=keepdims)
    out = np.asarray(out)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = _reduce_count(a.shape, axis)
    return tsum(a, axis, keepdims) * (1.0 / n)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    m = np.max(ad, axis=axis, keepdims=True)
    s = np.sum(np.exp(ad - m), axis=axis, keepdims=True)
    out_k = m + np.log(s)
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (gk * np.exp(ad - out_k),)

    return _record(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    e = np.exp(ad - np.max(ad, axis=axis, keepdims=True))
    y = e / np.sum(e, axis=axis, keepdims=True)
    return _record(y, (a,), lambda g: (y * (g - np.sum(g * y, axis=axis, keepdims=True)),))


def log_softmax(a, axis: int = -1) -> Tensor:
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {ad.shape} x {bd.shape}")
    out = np.matmul(ad, bd)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record(out, (a, b), vjp)


def conv1d_causal(x, w, dilation: int = 1) -> Tensor:
    """Causal dilated convolution.

    ``x`` is ``[C_in, T]`` or ``[B, C_in, T]`` and ``w`` is ``[C_out, C_in, K]``.
    The input is left-padded with ``(K - 1) * dilation`` zeros so output step t
    sees only inputs at steps <= t; tap ``K - 1`` is the current sample.
    """
    x, w = as_tensor(x), as_tensor(w)
    if dilation < 1:
        raise ParameterError(f"dilation must be positive, got {dilation}")
    xd, wd = x.data, w.data
    if wd.ndim != 3:
        raise ShapeError(f"conv weight must be [C_out, C_in, K], got {wd.shape}")
    batched = xd.ndim == 3
    if not batched:
        if xd.ndim != 2:
            raise ShapeError(f"conv input must be [C, T] or [B, C, T], got {xd.shape}")
        xd = xd[None]
    B, C, T = xd.shape
    C_out, C_in, K = wd.shape
    if C != C_in:
        raise ShapeError(f"conv input has {C} channels, weight expects {C_in}")
    if K < 1 or T < 1:
        raise ParameterError("kernel size and length must be >= 1")
    pad = (K - 1) * dilation
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, 0))) if pad else xd
    # im2col: one GEMM over [B*T, K*C_in]
    xt = np.swapaxes(xp, 1, 2)  # [B, T+pad, C]
    cols = np.concatenate([xt[:, k * dilation : k * dilation + T, :] for k in range(K)], axis=2)
    cols = cols.reshape(B * T, K * C)
    w2 = np.swapaxes(wd, 1, 2).reshape(C_out, K * C)
    out = np.swapaxes((cols @ w2.T).reshape(B, T, C_out), 1, 2)

    def vjp(g):
        if not batched:
            g = g[None]
        G = np.swapaxes(g, 1, 2).reshape(B * T, C_out)
        gw = np.swapaxes((G.T @ cols).reshape(C_out, K, C), 1, 2)
        gcols = (G @ w2).reshape(B, T, K, C)
        gxt = np.zeros((B, T + pad, C), dtype=xd.dtype)
        for k in range(K):
            gxt[:, k * dilation : k * dilation + T, :] += gcols[:, :, k, :]
        gx = np.swapaxes(gxt[:, pad:, :], 1, 2)
        return (gx if batched else gx[0]), np.ascontiguousarray(gw)

    res = out if batched else out[0]
    return _record(res, (x, w), vjp)


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.data.dtype

    def vjp(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _record(np.asarray(a.data[idx]), (a,), vjp)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _record(np.concatenate([t.data for t in ts], axis=axis), ts,
                   lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    n = len(ts)
    return _record(np.stack([t.data for t in ts], axis=axis), ts,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _record(np.broadcast_to(a.data, shape), (a,), lambda g: (_unbroadcast(g, old),))


# ---------------------------------------------------------------- composites

def l2_normalize(a, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return a / sqrt(tsum(a * a, axis=axis, keepdims=True) + eps)


def cosine_sim(a, b) -> Tensor:
    """Cosine similarity of two vectors; raises on a zero-norm input."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"cosine_sim needs equal-length vectors, got {a.shape} and {b.shape}")
    if not np.any(a.data) or not np.any(b.data):
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return tsum(a * b) / (sqrt(tsum(a * a)) * sqrt(tsum(b * b)))


def cosine_matrix(a, b, eps: float = 1e-12) -> Tensor:
    """Pairwise cosine similarities between the rows of ``a`` [n, d] and ``b`` [m, d]."""
    return matmul(l2_normalize(a, -1, eps), transpose(l2_normalize(b, -1, eps)))


def linear(x, w, b=None) -> Tensor:
    """x @ w.T + b with ``w`` stored as [out, in]."""
    y = matmul(x, transpose(w))
    return y if b is None else y + b


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    mu = mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = mean(xc * xc, axis=-1, keepdims=True)
    return xc / sqrt(var + eps) * gamma + beta


def mse(pred, target) -> Tensor:
    d = as_tensor(pred) - as_tensor(target)
    return mean(d * d)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row-wise softmax."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits, axis=-1)
    picked = getitem(lp, (np.arange(len(labels)), labels))
    return -mean(picked)


# ---------------------------------------------------------------- backward

def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Replay the tape from a scalar ``loss``.

    Returns a map from each trainable leaf that the loss depends on to its
    gradient (also stored in ``.grad``), then clears the tape.  Frozen tensors
    never appear in the map.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise UsageError("backward needs a scalar loss tensor")
    records = _state.records
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    try:
        if loss.trainable:
            leaves[id(loss)] = loss
        for out, parents, vjp in reversed(records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            pgs = vjp(g)
            for p, pg in zip(parents, pgs):
                if not p.requires_grad or pg is None:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if p.trainable:
                    leaves[key] = p
    finally:
        records.clear()
    result = {}
    for key, leaf in leaves.items():
        g = np.ascontiguousarray(grads[key], dtype=leaf.data.dtype)
        leaf.grad = g
        result[leaf] = g
    return result
