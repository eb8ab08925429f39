"""Frozen causal toy LM, soft prompt, task heads and prompt training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import container
from . import numcore as nc
from .data import TimeSeries, segment
from .encoder import Decoder, Encoder
from .errors import DegenerateTaskError, ParameterError, ShapeError
from .modules import ParamBundle
from .numcore import Tensor
from .optim import Adam
from .prototypes import VocabMatrix

MASK_VALUE = -1e9
PROMPT_BOUND = float(np.nextafter(np.float32(0.1), np.float32(0)))


@dataclass
class LMConfig:
    width: int = 64
    layers: int = 2
    heads: int = 2
    ff_mult: int = 4
    max_len: int = 128

    def __post_init__(self):
        if self.width % self.heads:
            raise ParameterError("width must be divisible by heads")


class FrozenLM(ParamBundle):
    """Pre-LN causal transformer whose parameters never receive gradients.

    Weights are stored [in, out].  Inputs are embedding vectors, so the token
    lookup table (``lm.tok_emb``) is carried along but bypassed.
    """

    def __init__(self, cfg: LMConfig, seed: int = 0, tok_emb: np.ndarray | None = None):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        M, F = cfg.width, cfg.width * cfg.ff_mult

        def w(shape, fan_in):
            return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)

        if tok_emb is not None:
            self.add_param("lm.tok_emb", tok_emb)
        self.add_param("lm.pos", rng.normal(0.0, 0.1, size=(cfg.max_len, M)))
        for i in range(cfg.layers):
            p = f"lm.layer{i}"
            self.add_param(f"{p}.ln1.g", np.ones(M))
            self.add_param(f"{p}.ln1.b", np.zeros(M))
            for n in ("q", "k", "v", "o"):
                self.add_param(f"{p}.attn.w{n}", w((M, M), M))
                self.add_param(f"{p}.attn.b{n}", np.zeros(M))
            self.add_param(f"{p}.ln2.g", np.ones(M))
            self.add_param(f"{p}.ln2.b", np.zeros(M))
            self.add_param(f"{p}.ff.w1", w((M, F), M))
            self.add_param(f"{p}.ff.b1", np.zeros(F))
            self.add_param(f"{p}.ff.w2", w((F, M), F))
            self.add_param(f"{p}.ff.b2", np.zeros(M))
        self.freeze()

    @property
    def width(self) -> int:
        return self.cfg.width

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "FrozenLM":
        max_len, width = state["lm.pos"].shape
        layers = sum(1 for k in state if k.endswith(".attn.wq"))
        ff = state["lm.layer0.ff.w1"].shape[1] if layers else 4 * width
        heads = int(state.get("lm.heads", np.array([2.0]))[0])
        cfg = LMConfig(width=width, layers=layers, heads=heads, ff_mult=ff // width, max_len=max_len)
        lm = cls(cfg, seed=0, tok_emb=state.get("lm.tok_emb"))
        lm.load_state_dict({k: v for k, v in state.items() if k != "lm.heads"})
        return lm

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"lm.heads": np.array([self.cfg.heads], np.float32)}
        out.update(super().state_dict())
        return out

    def checksum(self) -> str:
        return container.checksum(self.state_dict())

    def _attention(self, h: Tensor, p: str) -> Tensor:
        P = self.params
        B, S, M = h.shape
        H = self.cfg.heads
        dh = M // H

        def heads(t):
            return nc.transpose(nc.reshape(t, (B, S, H, dh)), (0, 2, 1, 3))

        q = heads(nc.matmul(h, P[f"{p}.wq"]) + P[f"{p}.bq"])
        k = heads(nc.matmul(h, P[f"{p}.wk"]) + P[f"{p}.bk"])
        v = heads(nc.matmul(h, P[f"{p}.wv"]) + P[f"{p}.bv"])
        mask = np.triu(np.full((S, S), MASK_VALUE, dtype=h.data.dtype), k=1)
        scores = nc.matmul(q, nc.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh)) + mask
        o = nc.matmul(nc.softmax(scores, axis=-1), v)
        o = nc.reshape(nc.transpose(o, (0, 2, 1, 3)), (B, S, M))
        return nc.matmul(o, P[f"{p}.wo"]) + P[f"{p}.bo"]

    def __call__(self, x) -> Tensor:
        """Output sequence [B, S, M] for input embeddings [B, S, M]."""
        x = nc.as_tensor(x)
        if x.ndim != 3 or x.shape[2] != self.width:
            raise ShapeError(f"LM expects [B, S, {self.width}] inputs, got {x.shape}")
        S = x.shape[1]
        if S > self.cfg.max_len:
            raise ShapeError(f"sequence length {S} exceeds LM max_len {self.cfg.max_len}")
        P = self.params
        x = x + P["lm.pos"].data[:S]
        for i in range(self.cfg.layers):
            p = f"lm.layer{i}"
            x = x + self._attention(nc.layer_norm(x, P[f"{p}.ln1.g"], P[f"{p}.ln1.b"]), f"{p}.attn")
            h = nc.layer_norm(x, P[f"{p}.ln2.g"], P[f"{p}.ln2.b"])
            h = nc.matmul(nc.gelu(nc.matmul(h, P[f"{p}.ff.w1"]) + P[f"{p}.ff.b1"]), P[f"{p}.ff.w2"])
            x = x + h + P[f"{p}.ff.b2"]
        return x


class SoftPrompt(ParamBundle):
    def __init__(self, init: np.ndarray, name: str = "prompt.pe"):
        super().__init__()
        init = np.asarray(init, dtype=np.float32)
        if init.ndim != 2:
            raise ShapeError("soft prompt must be [P, M]")
        self.pe = self.add_param(name, init)

    @property
    def length(self) -> int:
        return self.pe.shape[0]


class Classifier(ParamBundle):
    """Affine head M -> num_classes on the LM readout."""

    def __init__(self, width: int, num_classes: int, seed: int = 0, prefix: str = "head.cls"):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.w = self.add_param(f"{prefix}.w", rng.normal(0, 1 / math.sqrt(width), (num_classes, width)))
        self.b = self.add_param(f"{prefix}.b", np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.w.shape[0]

    def __call__(self, h) -> Tensor:
        h = nc.as_tensor(h)
        if h.ndim == 1:
            return nc.linear(nc.reshape(h, (1, -1)), self.w, self.b)[0]
        return nc.linear(h, self.w, self.b)


def init_prompt(mode: str, vocab: VocabMatrix, task_words: Sequence[str] | None = None, seed: int = 0,
                length: int | None = None) -> SoftPrompt:
    """``random``: uniform entries in (-0.1, 0.1); ``task_tokens``: the named vocab rows."""
    if mode == "random":
        if length is None:
            raise ParameterError("random prompt init needs a length")
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-0.1, 0.1, size=(length, vocab.M))
        return SoftPrompt(np.clip(vals, -PROMPT_BOUND, PROMPT_BOUND))
    if mode == "task_tokens":
        words = list(task_words or [])
        if length is not None and len(words) != length:
            raise ParameterError(f"task_tokens init needs {length} words, got {len(words)}")
        return SoftPrompt(vocab.rows(words) if words else np.zeros((0, vocab.M)))
    raise ParameterError(f"unknown prompt init mode {mode!r}")


def assemble_inputs(pe, e_seq) -> tuple[Tensor, list[str]]:
    """Concatenate [pe; e_seq] along positions and tag each position's source."""
    pe = nc.as_tensor(pe.pe if isinstance(pe, SoftPrompt) else pe)
    if isinstance(e_seq, (list, tuple)):
        e_seq = nc.stack(e_seq, axis=0) if e_seq else nc.Tensor(np.zeros((0, pe.shape[1])))
    e_seq = nc.as_tensor(e_seq)
    if e_seq.ndim == 2:
        e_seq = nc.reshape(e_seq, (1,) + e_seq.shape)
    B, K, M = e_seq.shape
    if pe.ndim != 2 or pe.shape[1] != M:
        raise ShapeError(f"prompt width {pe.shape} does not match embedding width {M}")
    P = pe.shape[0]
    if P + K < 1:
        raise ShapeError("empty input sequence")
    parts = [nc.broadcast_to(nc.reshape(pe, (1, P, M)), (B, P, M))] if P else []
    x = nc.concat(parts + [e_seq], axis=1) if parts else e_seq
    return x, ["prompt"] * P + ["ts"] * K


def forward_with_prompt(pe, e_seq, lm: FrozenLM, provenance: bool = False):
    """Run ``lm`` over [pe; e_seq] and return the last position's output.

    ``e_seq`` is a list of M-vectors (single sequence, returns [M]) or an
    array [B, K, M] (returns [B, M]).
    """
    single = isinstance(e_seq, (list, tuple)) or nc.as_tensor(e_seq).ndim == 2
    x, tags = assemble_inputs(pe, e_seq)
    if x.shape[2] != lm.width:
        raise ShapeError(f"embedding width {x.shape[2]} != LM width {lm.width}")
    out = lm(x)[:, -1, :]
    if single:
        out = out[0]
    return (out, tags) if provenance else out


# ---------------------------------------------------------------- training

@dataclass
class PromptHyper:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 200
    patience: int = 20
    token_len: int = 32
    seed: int = 0


def embed_series(encoder: Encoder, series: Sequence[TimeSeries], token_len: int) -> list[np.ndarray]:
    """Frozen-encoder embeddings [K, M] of each series cut into consecutive windows."""
    out = []
    with nc.no_grad():
        for s in series:
            tokens = segment(s, (token_len, token_len), (token_len, token_len))
            if not tokens:
                raise ShapeError(f"series of length {s.T} is shorter than token length {token_len}")
            batch = np.stack([t.values for t in tokens])
            out.append(encoder(batch, training=False).data.copy())
    return out


def _batches(seq_lens: Sequence[int], batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    groups: dict[int, list[int]] = {}
    for i, k in enumerate(seq_lens):
        groups.setdefault(k, []).append(i)
    batches = []
    for k in sorted(groups):
        idx = rng.permutation(groups[k])
        batches += [idx[j : j + batch_size] for j in range(0, len(idx), batch_size)]
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _fit(embeds, loss_fn, groups, hyper: PromptHyper, metric_name: str):
    opts = [Adam(params, lr=lr) for params, lr in groups]
    rng = np.random.default_rng(hyper.seed)
    metrics: list[dict] = []
    best, stale = math.inf, 0
    lens = [len(e) for e in embeds]
    for epoch in range(hyper.epochs):
        tot, score, n = 0.0, 0.0, 0
        for idx in _batches(lens, hyper.batch_size, rng):
            x = np.stack([embeds[i] for i in idx])
            loss, batch_score = loss_fn(x, idx)
            grads = nc.backward(loss)
            for opt in opts:
                opt.step(grads)
            tot += float(loss.data) * len(idx)
            score += batch_score
            n += len(idx)
        ep_loss = tot / n
        metrics.append({"epoch": epoch + 1, "loss": ep_loss, metric_name: score / n})
        if best == math.inf or ep_loss < best - 1e-6 * max(1.0, abs(best)):
            best, stale = ep_loss, 0
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    return metrics


def train_prompt_classify(dataset: Sequence[TimeSeries], encoder: Encoder, lm: FrozenLM, pe: SoftPrompt,
                          f_c: Classifier, hyper: PromptHyper, embeds=None, head_lr: float | None = None):
    """Cross-entropy steps on ``f_c(forward_with_prompt(...))`` over ``pe`` and ``f_c`` only."""
    labels = np.array([s.label for s in dataset])
    if any(s.label is None for s in dataset):
        raise DegenerateTaskError("classification needs a label on every series")
    if len(np.unique(labels)) < 2:
        raise DegenerateTaskError("classification needs at least two classes")
    if labels.min() < 0 or labels.max() >= f_c.num_classes:
        raise ShapeError(f"labels outside the classifier's {f_c.num_classes} classes")
    if embeds is None:
        embeds = embed_series(encoder, dataset, hyper.token_len)

    def loss_fn(x, idx):
        logits = f_c(forward_with_prompt(pe.pe, x, lm))
        y = labels[idx]
        correct = float(np.sum(np.argmax(logits.data, axis=1) == y))
        return nc.cross_entropy(logits, y), correct

    groups = [(pe.parameters(), hyper.lr), (f_c.parameters(), head_lr or hyper.lr)]
    metrics = _fit(embeds, loss_fn, groups, hyper, "accuracy")
    return pe, f_c, metrics


def train_prompt_forecast(dataset: Sequence[TimeSeries], encoder: Encoder, lm: FrozenLM, pe: SoftPrompt,
                          f_d: Decoder, hyper: PromptHyper, embeds=None, head_lr: float | None = None):
    """MSE steps on ``f_d(forward_with_prompt(...))`` over ``pe`` and ``f_d`` only."""
    if any(s.target is None for s in dataset):
        raise ShapeError("forecasting needs a target on every series")
    targets = np.stack([s.target for s in dataset])
    if targets.shape[1:] != (f_d.channels, f_d.out_len):
        raise ShapeError(f"targets have shape {targets.shape[1:]}, decoder emits {(f_d.channels, f_d.out_len)}")
    if embeds is None:
        embeds = embed_series(encoder, dataset, hyper.token_len)

    def loss_fn(x, idx):
        pred = f_d(forward_with_prompt(pe.pe, x, lm))
        loss = nc.mse(pred, targets[idx])
        return loss, float(loss.data) * len(idx)

    groups = [(pe.parameters(), hyper.lr), (f_d.parameters(), head_lr or hyper.lr)]
    metrics = _fit(embeds, loss_fn, groups, hyper, "mse")
    return pe, f_d, metrics


def predict(embeds, lm: FrozenLM, pe: SoftPrompt, head, batch_size: int = 64) -> list[np.ndarray]:
    """Head outputs for each embedding sequence, without recording gradients."""
    out: list[np.ndarray | None] = [None] * len(embeds)
    lens = [len(e) for e in embeds]
    with nc.no_grad():
        groups: dict[int, list[int]] = {}
        for i, k in enumerate(lens):
            groups.setdefault(k, []).append(i)
        for k in sorted(groups):
            idx = groups[k]
            for j in range(0, len(idx), batch_size):
                chunk = idx[j : j + batch_size]
                x = np.stack([embeds[i] for i in chunk])
                y = head(forward_with_prompt(pe.pe, x, lm)).data
                for i, row in zip(chunk, y):
                    out[i] = row
    return out
