"""Two-phase training (encoder contrast, then prompt/head), checkpoints, evaluation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from . import numcore as nc
from .config import PHASE1_KEYS, RunConfig
from .contrast import NegativeQueue, instance_loss, text_align_loss
from .data import AugmentConfig, TimeSeries, augment_strong, augment_weak, load_dataset, sample_pairs, segment
from .encoder import Decoder, Encoder, EncoderConfig, ProjectionHead, autoencode_loss, momentum_update
from .errors import ConfigError, EvalError, ShapeError
from .optim import Adam
from .promptlm import (
    Classifier, FrozenLM, PromptHyper, SoftPrompt, embed_series, init_prompt, predict,
    train_prompt_classify, train_prompt_forecast,
)
from .prototypes import VocabMatrix, fixed_word_prototypes, load_vocab, nearest_words, pca_prototypes
from .resources import builtin_lm_path, builtin_vocab_path, load_lm

log = logging.getLogger(__name__)

WEIGHTS_FILE = "weights.tste"
META_FILE = "meta.json"


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict
    phase: str
    history: list[dict] = field(default_factory=list)

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        container.save(path / WEIGHTS_FILE, self.tensors)
        meta = {"phase": self.phase, "config": self.config, "history": self.history}
        (path / META_FILE).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        try:
            meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
            tensors = container.load(path / WEIGHTS_FILE)
        except OSError as exc:
            raise ConfigError(f"cannot read checkpoint {path}: {exc.strerror}") from None
        return cls(tensors, meta["config"], meta["phase"], meta.get("history", []))

    @property
    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}

    def checksum(self, prefix: str | None = None) -> str:
        return container.checksum(self.tensors if prefix is None else self.subset(prefix))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (container.dumps(self.tensors) == container.dumps(other.tensors)
                and self.config == other.config and self.phase == other.phase
                and self.history == other.history)


# ---------------------------------------------------------------- assets

def resolve_vocab(cfg: RunConfig) -> VocabMatrix:
    return load_vocab(builtin_vocab_path() if cfg.vocab == "builtin" else cfg.vocab)


def resolve_lm(cfg: RunConfig) -> FrozenLM:
    return load_lm(builtin_lm_path() if cfg.lm == "builtin" else cfg.lm)


def build_prototypes(cfg: RunConfig, vocab: VocabMatrix) -> np.ndarray:
    if cfg.prototypes == "pca":
        return pca_prototypes(vocab, cfg.num_prototypes)
    return fixed_word_prototypes(vocab, cfg.words(cfg.prototype_words))


def load_series(cfg: RunConfig, dataset=None) -> list[TimeSeries]:
    if dataset is not None:
        return list(dataset)
    if not cfg.dataset:
        raise ConfigError("no dataset given")
    try:
        return load_dataset(cfg.dataset, task=cfg.task)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {cfg.dataset}: {exc.strerror}") from None


def split_dataset(series: Sequence[TimeSeries], cfg: RunConfig) -> tuple[list[TimeSeries], list[TimeSeries]]:
    """Seeded shuffle, then the first (1 - holdout_fraction) share is the training split."""
    order = np.random.default_rng(cfg.seed).permutation(len(series))
    n_train = len(series) - int(round(cfg.holdout_fraction * len(series)))
    return [series[i] for i in order[:n_train]], [series[i] for i in order[n_train:]]


def encoder_config(cfg: RunConfig, width: int) -> EncoderConfig:
    return EncoderConfig(cfg.num_blocks, cfg.hidden_channels, cfg.kernel, width, cfg.momentum)


def decoder_len(cfg: RunConfig) -> int:
    return cfg.horizon if cfg.task == "forecast" else cfg.len_min


def _channels(series: Sequence[TimeSeries]) -> int:
    ds = {s.D for s in series}
    if len(ds) != 1:
        raise ShapeError(f"dataset mixes channel counts {sorted(ds)}")
    return ds.pop()


# ---------------------------------------------------------------- phase 1

def _phase1_batch(train, idx, cfg: RunConfig, aug: AugmentConfig, rng: np.random.Generator):
    t_min = min(train[i].T for i in idx)
    L = int(rng.integers(cfg.len_min, min(cfg.len_max, t_min) + 1))
    pool, owner = [], []
    for j, i in enumerate(idx):
        toks = segment(train[i], (L, L), (cfg.step_min, cfg.step_max), rng, source=int(i))
        pool += toks
        owner += [j] * len(toks)
    owner = np.array(owner)
    strong, pos, weak, neg, raw = [], [], [], [], []
    for j in range(len(idx)):
        mine = np.flatnonzero(owner == j)
        a_idx = int(mine[rng.integers(len(mine))])
        anchor, positive, negatives = sample_pairs(pool, a_idx, rng, cfg.overlap_ratio, aug)
        strong.append(augment_strong(anchor, aug, rng).values)
        w = positive if positive.view == "weak" else augment_weak(anchor, aug, rng)
        weak.append(w.values)
        pos.append(positive.values)
        neg.append(negatives[int(rng.integers(len(negatives)))].values)
        raw.append(anchor.values)
    return tuple(np.stack(v) for v in (strong, pos, weak, neg, raw))


def train_phase1(cfg: RunConfig, dataset=None) -> Checkpoint:
    """Contrastive encoder training; returns a ``phase1`` checkpoint."""
    cfg.validate()
    series = load_series(cfg, dataset)
    train, _ = split_dataset(series, cfg)
    if len(train) < cfg.batch_size:
        raise ConfigError(f"training split has {len(train)} series, fewer than batch_size={cfg.batch_size}")
    if cfg.task == "forecast" and any(s.target is None for s in train):
        raise ConfigError("forecast task needs targets on every series")
    D = _channels(train)
    if min(s.T for s in train) < cfg.len_min:
        raise ConfigError(f"series shorter than len_min={cfg.len_min}")
    vocab = resolve_vocab(cfg)
    M = vocab.M
    tp = build_prototypes(cfg, vocab)

    rng = np.random.default_rng(cfg.seed)
    enc = Encoder(encoder_config(cfg, M), D, seed=cfg.seed)
    key = enc.copy()
    key.freeze()
    proj = ProjectionHead(M, seed=cfg.seed + 1)
    dec = Decoder(M, D, decoder_len(cfg), seed=cfg.seed + 2) if cfg.decoder_enabled else None
    opt = Adam(enc.parameters() + proj.parameters(), lr=cfg.lr)
    dec_opt = Adam(dec.parameters(), lr=cfg.lr) if dec else None
    queue = NegativeQueue(cfg.queue_capacity)
    aug = AugmentConfig(cfg.jitter_sigma, cfg.scale_sigma, cfg.max_segments, cfg.seed)
    B = cfg.batch_size
    history = []
    for epoch in range(cfg.epochs_phase1):
        order = rng.permutation(len(train))
        sums = Counter()
        steps = len(train) // B
        for b in range(steps):
            idx = order[b * B : (b + 1) * B]
            strong, pos, weak, neg, raw = _phase1_batch(train, idx, cfg, aug, rng)
            q = enc(strong, training=True)
            with nc.no_grad():
                keys = key(np.concatenate([pos, weak, neg]), training=True).data
            k_pos, k_weak, k_neg = keys[:B], keys[B : 2 * B], keys[2 * B :]
            if len(queue) == 0:
                queue.push(k_neg)
            l_ins = instance_loss(q, k_pos, queue, cfg.tau_i, proj)
            l_text = text_align_loss(q, k_weak, k_neg, tp, cfg.tau_f, cfg.weight_align, cfg.weight_feature)
            loss = l_ins * cfg.weight_ins + l_text
            l_ae = None
            if dec is not None:
                l_ae = autoencode_loss(raw, q.detach(), dec)
                loss = loss + l_ae
            grads = nc.backward(loss)
            opt.step(grads)
            if dec_opt:
                dec_opt.step(grads)
            momentum_update(enc, key, cfg.momentum)
            queue.push(k_pos)
            sums["loss"] += float(l_ins.data) * cfg.weight_ins + float(l_text.data)
            sums["ins"] += float(l_ins.data)
            sums["text"] += float(l_text.data)
            if l_ae is not None:
                sums["ae"] += float(l_ae.data)
        rec = {"epoch": epoch + 1, **{k: v / steps for k, v in sorted(sums.items())}}
        history.append(rec)
        log.info("phase1 %s", rec)

    tensors = {**enc.state_dict(), **proj.state_dict()}
    if dec is not None:
        tensors.update(dec.state_dict())
    tensors["proto.tp"] = tp
    return Checkpoint(tensors, cfg.to_dict(), "phase1", history)


def restore_encoder(ckpt: Checkpoint) -> Encoder:
    cfg = ckpt.run_config
    w = ckpt.tensors["enc.inproj.w"]
    width = ckpt.tensors["enc.out.b"].shape[0]
    enc = Encoder(encoder_config(cfg, width), w.shape[1])
    enc.load_state_dict(ckpt.tensors)
    enc.freeze()
    return enc


def _restore_decoder(ckpt: Checkpoint, channels: int) -> Decoder:
    w = ckpt.tensors["dec.w"]
    dec = Decoder(w.shape[1], channels, w.shape[0] // channels)
    dec.load_state_dict(ckpt.tensors)
    return dec


# ---------------------------------------------------------------- phase 2

def _prompt_words(cfg: RunConfig) -> list[str]:
    words = cfg.words(cfg.task_words)
    if not words:
        raise ConfigError("task_words is empty")
    return [words[i % len(words)] for i in range(cfg.prompt_length)]


def train_phase2(cfg: RunConfig, ckpt: Checkpoint, dataset=None) -> Checkpoint:
    """Prompt and head training over a frozen encoder and frozen LM."""
    cfg.validate()
    if ckpt.phase not in ("phase1", "phase2"):
        raise ConfigError(f"unknown checkpoint phase {ckpt.phase!r}")
    if ckpt.config.get("task") != cfg.task:
        raise ConfigError(f"checkpoint was trained for task {ckpt.config.get('task')!r}, config asks for {cfg.task!r}")
    if cfg.task == "forecast" and "dec.w" not in ckpt.tensors:
        raise ConfigError("forecast task needs a phase-1 decoder record (dec.w) in the checkpoint")
    merged = {**cfg.to_dict(), **{k: ckpt.config[k] for k in PHASE1_KEYS}}
    merged["dataset"] = cfg.dataset or ckpt.config.get("dataset", "")
    run = RunConfig.from_dict(merged)

    series = load_series(run, dataset)
    train, _ = split_dataset(series, run)
    enc = restore_encoder(ckpt)
    if _channels(train) != enc.in_channels:
        raise ConfigError(f"dataset has {_channels(train)} channels, encoder expects {enc.in_channels}")
    enc_sum = container.checksum(enc.state_dict())
    lm = resolve_lm(run)
    if lm.width != enc.cfg.embed_dim:
        raise ConfigError(f"LM width {lm.width} != encoder embedding width {enc.cfg.embed_dim}")
    lm_sum = lm.checksum()
    vocab = resolve_vocab(run)
    hyper = PromptHyper(run.lr_prompt, run.batch_size, run.epochs_phase2, run.patience, run.token_len, run.seed)
    embeds = embed_series(enc, train, run.token_len)

    init = run.prompt_init
    if init == "auto":
        init = "task_tokens" if cfg.task == "classify" else "random"
    if init == "task_tokens":
        pe = init_prompt("task_tokens", vocab, _prompt_words(run), length=run.prompt_length)
    else:
        pe = init_prompt("random", vocab, seed=run.seed, length=run.prompt_length)

    tensors = dict(ckpt.tensors)
    if cfg.task == "classify":
        n_classes = int(max(s.label for s in train if s.label is not None)) + 1
        head = Classifier(lm.width, n_classes, seed=run.seed + 3)
        pe, head, metrics = train_prompt_classify(train, enc, lm, pe, head, hyper, embeds=embeds)
    else:
        head = _restore_decoder(ckpt, enc.in_channels)
        pe, head, metrics = train_prompt_forecast(train, enc, lm, pe, head, hyper, embeds=embeds,
                                                  head_lr=run.lr_finetune)
    if lm.checksum() != lm_sum or container.checksum(enc.state_dict()) != enc_sum:
        raise RuntimeError("frozen parameters changed during prompt training")
    tensors.update(pe.state_dict())
    tensors.update(head.state_dict())
    return Checkpoint(tensors, run.to_dict(), "phase2", list(ckpt.history) + metrics)


# ---------------------------------------------------------------- evaluation

class _Model:
    """Everything needed to run inference from a phase-2 checkpoint."""

    def __init__(self, ckpt: Checkpoint):
        if ckpt.phase != "phase2":
            raise EvalError("evaluation needs a phase-2 checkpoint")
        self.cfg = ckpt.run_config
        self.encoder = restore_encoder(ckpt)
        self.lm = resolve_lm(self.cfg)
        self.prompt = SoftPrompt(ckpt.tensors["prompt.pe"])
        if self.cfg.task == "classify":
            w = ckpt.tensors["head.cls.w"]
            self.head = Classifier(w.shape[1], w.shape[0])
            self.head.load_state_dict(ckpt.tensors)
        else:
            self.head = _restore_decoder(ckpt, self.encoder.in_channels)
        self.head.freeze()
        self.prompt.freeze()

    def outputs(self, series: Sequence[TimeSeries]) -> list[np.ndarray]:
        if series and _channels(series) != self.encoder.in_channels:
            raise EvalError(f"dataset has {_channels(series)} channels, model expects {self.encoder.in_channels}")
        try:
            embeds = embed_series(self.encoder, series, self.cfg.token_len)
        except ShapeError as exc:
            raise EvalError(str(exc)) from None
        return predict(embeds, self.lm, self.prompt, self.head)


def classification_report(y_true, y_pred, num_classes: int) -> dict:
    y_true, y_pred = np.asarray(y_true, int), np.asarray(y_pred, int)
    conf = np.zeros((num_classes, num_classes), dtype=int)
    np.add.at(conf, (y_true, y_pred), 1)
    acc = float(np.mean(y_true == y_pred)) if len(y_true) else float("nan")
    return {"task": "classify", "n": int(len(y_true)), "accuracy": acc, "confusion": conf.tolist()}


def forecast_report(pred, target, last_values) -> dict:
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    mse = float(np.mean((pred - target) ** 2))
    persist = np.repeat(np.asarray(last_values, np.float64)[..., None], target.shape[-1], axis=-1)
    base = float(np.mean((persist - target) ** 2))
    return {"task": "forecast", "n": int(len(pred)), "mse": mse, "rmse": float(np.sqrt(mse)),
            "persistence_mse": base}


def evaluate(ckpt: Checkpoint, dataset: Sequence[TimeSeries]) -> dict:
    """Accuracy and confusion counts, or MSE/RMSE against the persistence baseline."""
    model = _Model(ckpt)
    series = list(dataset)
    if model.cfg.task == "classify":
        if any(s.label is None for s in series):
            raise EvalError("classification evaluation needs labels")
        C = model.head.num_classes
        labels = np.array([s.label for s in series], int)
        if len(labels) and (labels.min() < 0 or labels.max() >= C):
            raise EvalError(f"labels outside the model's {C} classes")
        preds = [int(np.argmax(o)) for o in model.outputs(series)]
        return classification_report(labels, preds, C)
    if any(s.target is None for s in series):
        raise EvalError("forecast evaluation needs targets")
    shape = (model.head.channels, model.head.out_len)
    if any(s.target.shape != shape for s in series):
        raise EvalError(f"targets must have shape {shape}")
    preds = model.outputs(series)
    return forecast_report(np.stack(preds), np.stack([s.target for s in series]),
                           np.stack([s.values[:, -1] for s in series]))


def match_words(ckpt: Checkpoint, dataset: Sequence[TimeSeries], vocab: VocabMatrix, n: int) -> dict:
    """Nearest vocabulary words for every token embedding plus a frequency table."""
    cfg = ckpt.run_config
    enc = restore_encoder(ckpt)
    if vocab.M != enc.cfg.embed_dim:
        raise ShapeError(f"vocab width {vocab.M} != embedding width {enc.cfg.embed_dim}")
    L = cfg.token_len
    per_token, freq = [], Counter()
    for si, s in enumerate(dataset):
        tokens = segment(s, (L, L), (L, L))
        if not tokens:
            continue
        with nc.no_grad():
            emb = enc(np.stack([t.values for t in tokens]), training=False).data
        for t, e in zip(tokens, emb):
            words = nearest_words(e, vocab, n)
            freq.update(w for w, _ in words)
            per_token.append({"series": si, "start": t.start, "end": t.end,
                              "words": [[w, round(c, 6)] for w, c in words]})
    table = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return {"tokens": per_token, "frequencies": dict(table)}
