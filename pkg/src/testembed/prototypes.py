"""Text prototypes drawn from a frozen vocabulary embedding matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from .errors import ParameterError, RankError, ShapeError, VocabLookupError

VOCAB_RECORD = "vocab.embeddings"


@dataclass
class VocabMatrix:
    embeddings: np.ndarray  # [V, M]
    tokens: list[str]

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2:
            raise ShapeError("vocab embeddings must be [V, M]")
        if len(self.tokens) != self.embeddings.shape[0]:
            raise ShapeError(f"{len(self.tokens)} token names for {self.embeddings.shape[0]} rows")
        if not np.all(np.isfinite(self.embeddings)):
            raise ShapeError("vocab embeddings must be finite")
        self._index = {}
        for i, t in enumerate(self.tokens):
            self._index.setdefault(t, i)

    @property
    def V(self) -> int:
        return self.embeddings.shape[0]

    @property
    def M(self) -> int:
        return self.embeddings.shape[1]

    def index(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise VocabLookupError(f"word {word!r} not in vocabulary") from None

    def rows(self, words: Sequence[str]) -> np.ndarray:
        return self.embeddings[[self.index(w) for w in words]]


def vocab_sidecar(path) -> Path:
    """Token-name file stored next to a vocab container: ``x.tste`` -> ``x.txt``."""
    return Path(path).with_suffix(".txt")


def save_vocab(path, vocab: VocabMatrix) -> None:
    container.save(path, {VOCAB_RECORD: vocab.embeddings})
    vocab_sidecar(path).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")


def load_vocab(path) -> VocabMatrix:
    records = container.load(path)
    if VOCAB_RECORD not in records:
        raise ShapeError(f"{path} has no {VOCAB_RECORD!r} record")
    tokens = vocab_sidecar(path).read_text(encoding="utf-8").splitlines()
    return VocabMatrix(records[VOCAB_RECORD], tokens)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def power_iteration_pca(x: np.ndarray, k: int, tol: float = 1e-9, max_iter: int = 10_000,
                        seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``k`` principal axes of the row-centered ``x`` by deflated power iteration.

    Returns (axes [k, M], eigenvalues [k]) of the covariance, in float64.
    """
    x = np.asarray(x, dtype=np.float64)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / x.shape[0]
    rng = np.random.default_rng(seed)
    scale = np.trace(cov)
    axes, vals = [], []
    for _ in range(k):
        v = rng.normal(size=cov.shape[0])
        for a in axes:  # start inside the deflated subspace
            v -= (v @ a) * a
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = cov @ v
            nrm = np.linalg.norm(w)
            if nrm <= 1e-12 * max(scale, 1e-300):
                break
            w /= nrm
            done = np.linalg.norm(w - np.sign(w @ v) * v) < tol
            v = w
            if done:
                break
        lam = float(v @ cov @ v)
        if lam <= 1e-10 * max(scale, 1e-300):
            raise RankError(f"requested {k} components but centered data has rank {len(axes)}")
        v = _sign_fix(v)
        axes.append(v)
        vals.append(lam)
        cov = cov - lam * np.outer(v, v)
    return np.array(axes), np.array(vals)


def pca_prototypes(vocab: VocabMatrix | np.ndarray, k: int) -> np.ndarray:
    """Top-``k`` principal directions of the vocab rows, unit-norm and sign-fixed."""
    emb = vocab.embeddings if isinstance(vocab, VocabMatrix) else np.asarray(vocab)
    V, M = emb.shape
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k > min(V, M):
        raise RankError(f"k={k} exceeds min(V, M)={min(V, M)}")
    axes, _ = power_iteration_pca(emb, k)
    return axes.astype(np.float32)


def fixed_word_prototypes(vocab: VocabMatrix, words: Sequence[str]) -> np.ndarray:
    if not words:
        raise ParameterError("need at least one prototype word")
    rows = vocab.rows(words).astype(np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ParameterError("prototype word has a zero embedding")
    return (rows / norms).astype(np.float32)


def prototype_coords(e, tp) -> np.ndarray:
    """Coordinates ``e @ tp.T`` of embedding(s) in prototype axes."""
    e, tp = np.asarray(e), np.asarray(tp)
    if e.shape[-1] != tp.shape[-1]:
        raise ShapeError(f"embedding width {e.shape[-1]} != prototype width {tp.shape[-1]}")
    return e @ tp.T


def nearest_words(e, vocab: VocabMatrix, n: int) -> list[tuple[str, float]]:
    """Top-``n`` vocabulary tokens by cosine to ``e``; ties go to the lower index."""
    if n < 0 or n > vocab.V:
        raise ParameterError(f"n must lie in [0, {vocab.V}]")
    if n == 0:
        return []
    e = np.asarray(e, dtype=np.float64)
    emb = vocab.embeddings.astype(np.float64)
    denom = np.linalg.norm(emb, axis=1) * np.linalg.norm(e)
    cos = np.divide(emb @ e, denom, out=np.zeros(vocab.V), where=denom > 0)
    order = np.argsort(-cos, kind="stable")[:n]
    return [(vocab.tokens[i], float(cos[i])) for i in order]
