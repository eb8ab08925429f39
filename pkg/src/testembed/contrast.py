"""Instance-wise, feature-wise and text-prototype-aligned contrastive losses."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ParameterError, ShapeError, UsageError
from .numcore import Tensor


@dataclass
class Temperatures:
    tau_i: float = 0.1
    tau_f: float = 0.5

    def __post_init__(self):
        if not (self.tau_i > 0 and self.tau_f > 0):
            raise ParameterError("temperatures must be strictly positive")


class NegativeQueue:
    """FIFO store of key-encoder embeddings used as instance negatives."""

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ParameterError("queue capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, batch) -> "NegativeQueue":
        arr = np.asarray(batch.data if isinstance(batch, Tensor) else batch, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None]
        if self._items and arr.shape[1] != self._items[0].shape[0]:
            raise ShapeError(f"queue holds {self._items[0].shape[0]}-vectors, got {arr.shape[1]}")
        for row in arr:
            self._items.append(row.copy())
        return self

    def as_array(self) -> np.ndarray:
        if not self._items:
            return np.zeros((0, 0), np.float32)
        return np.stack(self._items)


def queue_push(queue: NegativeQueue, batch) -> NegativeQueue:
    return queue.push(batch)


def info_nce(pos_logit, neg_logits) -> Tensor:
    """-log softmax of the positive logit against the negatives, averaged over rows.

    ``pos_logit`` is [B] and ``neg_logits`` [B, N].
    """
    pos_logit, neg_logits = nc.as_tensor(pos_logit), nc.as_tensor(neg_logits)
    logits = nc.concat([nc.reshape(pos_logit, (-1, 1)), neg_logits], axis=1)
    return nc.mean(nc.logsumexp(logits, axis=1) - logits[:, 0])


def instance_loss(e, e_pos, queue: NegativeQueue | np.ndarray, tau_i: float, f_p=None) -> Tensor:
    """MoCo-style instance contrast with cosine similarity of projected vectors.

    ``e`` and ``e_pos`` are [B, M] (or single [M] vectors).  Queue entries are
    constants; gradients reach ``e`` and the projection head ``f_p``.
    """
    negs = queue.as_array() if isinstance(queue, NegativeQueue) else np.asarray(queue)
    if negs.size == 0:
        raise UsageError("instance loss needs a non-empty negative queue")
    if tau_i <= 0:
        raise ParameterError("tau_i must be positive")
    e, e_pos = nc.as_tensor(e), nc.as_tensor(e_pos)
    if e.ndim == 1:
        e, e_pos = nc.reshape(e, (1, -1)), nc.reshape(e_pos, (1, -1))
    if e.shape != e_pos.shape or negs.shape[-1] != e.shape[-1]:
        raise ShapeError("anchor, positive and queue vectors must share dimension M")
    proj = (lambda v: v) if f_p is None else f_p
    q = nc.l2_normalize(proj(e))
    k = nc.l2_normalize(proj(e_pos))
    n = nc.l2_normalize(proj(nc.Tensor(negs)))
    pos = nc.tsum(q * k, axis=1) * (1.0 / tau_i)
    neg = nc.matmul(q, nc.transpose(n)) * (1.0 / tau_i)
    return info_nce(pos, neg)


def feature_loss(m_weak, m_strong, m_neg, tau_f: float) -> Tensor:
    """Feature-category uniformity over the columns of three B x M matrices.

    For each column i the strong/weak pair is the positive; the denominator
    sums over every column j of the strong view and of the negative view.
    Summed (not averaged) over columns.
    """
    m_weak, m_strong, m_neg = nc.as_tensor(m_weak), nc.as_tensor(m_strong), nc.as_tensor(m_neg)
    if not (m_weak.shape == m_strong.shape == m_neg.shape) or m_weak.ndim != 2:
        raise ShapeError("feature matrices must all be B x M")
    if m_weak.shape[0] < 2:
        raise UsageError("feature loss needs a batch of at least 2 rows")
    if tau_f <= 0:
        raise ParameterError("tau_f must be positive")
    cw = nc.l2_normalize(nc.transpose(m_weak))  # [M, B]
    cs = nc.l2_normalize(nc.transpose(m_strong))
    cn = nc.l2_normalize(nc.transpose(m_neg))
    inv = 1.0 / tau_f
    aligned = nc.tsum(cs * cw, axis=1) * inv  # [M]
    logits = nc.concat([nc.matmul(cs, nc.transpose(cs)), nc.matmul(cs, nc.transpose(cn))], axis=1) * inv
    return nc.tsum(nc.logsumexp(logits, axis=1) - aligned)


def text_alignment(e, tp) -> Tensor:
    """Negative mean cosine between embedding(s) ``e`` and every prototype row."""
    tp = np.asarray(tp.data if isinstance(tp, Tensor) else tp)
    if tp.ndim != 2 or tp.shape[0] < 1:
        raise ParameterError("need at least one prototype")
    e = nc.as_tensor(e)
    if e.ndim == 1:
        e = nc.reshape(e, (1, -1))
    if e.shape[1] != tp.shape[1]:
        raise ShapeError(f"embedding width {e.shape[1]} != prototype width {tp.shape[1]}")
    return -nc.mean(nc.cosine_matrix(e, nc.Tensor(tp)))


def text_align_loss(e, e_pos, e_neg, tp, tau_f: float, weight_align: float = 1.0,
                    weight_feature: float = 1.0) -> Tensor:
    """Prototype alignment plus feature contrast in prototype coordinates.

    The anchor batch ``e`` takes the strong-view role, ``e_pos`` the weak
    view and ``e_neg`` the negatives; each is mapped through ``x @ tp.T``.
    """
    tp = np.asarray(tp.data if isinstance(tp, Tensor) else tp)
    if tp.ndim != 2 or tp.shape[0] < 1:
        raise ParameterError("need at least one prototype")
    tpt = nc.Tensor(tp.T)
    e, e_pos, e_neg = nc.as_tensor(e), nc.as_tensor(e_pos), nc.as_tensor(e_neg)
    align = text_alignment(e, tp)
    fea = feature_loss(nc.matmul(e_pos, tpt), nc.matmul(e, tpt), nc.matmul(e_neg, tpt), tau_f)
    return align * weight_align + fea * weight_feature
