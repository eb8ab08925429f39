"""Run configuration: flat ``key = value`` files, validated before any training."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

# keys fixed by phase 1; phase 2 inherits them from the encoder checkpoint
PHASE1_KEYS = (
    "task", "num_blocks", "hidden_channels", "kernel", "momentum", "tau_i", "tau_f", "queue_capacity",
    "prototypes", "num_prototypes", "prototype_words", "lr", "epochs_phase1", "batch_size",
    "len_min", "len_max", "step_min", "step_max", "jitter_sigma", "scale_sigma", "max_segments",
    "overlap_ratio", "weight_ins", "weight_align", "weight_feature", "train_decoder", "horizon",
    "holdout_fraction", "seed", "vocab", "lm",
)


@dataclass
class RunConfig:
    dataset: str = ""
    task: str = "classify"
    # encoder
    num_blocks: int = 10
    hidden_channels: int = 64
    kernel: int = 3
    momentum: float = 0.99
    # contrast
    tau_i: float = 0.1
    tau_f: float = 0.5
    queue_capacity: int = 1024
    weight_ins: float = 1.0
    weight_align: float = 1.0
    weight_feature: float = 1.0
    # prototypes
    prototypes: str = "pca"
    num_prototypes: int = 10
    prototype_words: str = "value,shape,frequency"
    # tokens and augmentation
    len_min: int = 16
    len_max: int = 64
    step_min: int = 8
    step_max: int = 32
    jitter_sigma: float = 0.08
    scale_sigma: float = 0.1
    max_segments: int = 5
    overlap_ratio: float = 0.5
    token_len: int = 32
    # prompt and heads
    prompt_length: int = 20
    prompt_init: str = "auto"
    task_words: str = "classify,the,given,sequence"
    train_decoder: str = "auto"
    horizon: int = 1
    # optimisation
    lr: float = 1e-3
    lr_prompt: float = 1e-3
    lr_finetune: float = 1e-3
    epochs_phase1: int = 30
    epochs_phase2: int = 200
    patience: int = 20
    batch_size: int = 32
    holdout_fraction: float = 0.2
    seed: int = 0
    # frozen assets; "builtin" selects the shipped files
    vocab: str = "builtin"
    lm: str = "builtin"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.task in ("classify", "forecast"), f"task must be classify or forecast, got {self.task!r}")
        need(self.num_blocks >= 0, "num_blocks must be >= 0")
        need(self.hidden_channels >= 1 and self.kernel >= 1, "hidden_channels and kernel must be >= 1")
        need(0.0 <= self.momentum <= 1.0, "momentum must lie in [0, 1]")
        need(self.tau_i > 0 and self.tau_f > 0, "temperatures must be positive")
        need(self.queue_capacity >= 1, "queue_capacity must be >= 1")
        need(self.prototypes in ("pca", "fixed"), "prototypes must be pca or fixed")
        need(self.num_prototypes >= 1, "num_prototypes must be >= 1")
        need(self.prototypes != "fixed" or bool(self.words(self.prototype_words)), "prototype_words is empty")
        need(4 <= self.len_min <= self.len_max, "need 4 <= len_min <= len_max")
        need(1 <= self.step_min <= self.step_max, "need 1 <= step_min <= step_max")
        need(self.jitter_sigma >= 0 and self.scale_sigma >= 0, "augmentation sigmas must be >= 0")
        need(1 <= self.max_segments <= self.len_min, "need 1 <= max_segments <= len_min")
        need(0.0 <= self.overlap_ratio <= 1.0, "overlap_ratio must lie in [0, 1]")
        need(self.token_len >= 4, "token_len must be >= 4")
        need(self.prompt_length >= 0, "prompt_length must be >= 0")
        need(self.prompt_init in ("auto", "random", "task_tokens"), "prompt_init must be auto, random or task_tokens")
        need(self.train_decoder in ("auto", "true", "false"), "train_decoder must be auto, true or false")
        need(self.horizon >= 1, "horizon must be >= 1")
        need(self.lr > 0 and self.lr_prompt > 0 and self.lr_finetune > 0, "learning rates must be positive")
        need(self.epochs_phase1 >= 0 and self.epochs_phase2 >= 0, "epochs must be >= 0")
        need(self.patience >= 1, "patience must be >= 1")
        need(self.batch_size >= 2, "batch_size must be >= 2")
        need(0.0 <= self.holdout_fraction < 1.0, "holdout_fraction must lie in [0, 1)")
        need(self.seed >= 0, "seed must be >= 0")
        return self

    @staticmethod
    def words(s: str) -> list[str]:
        return [w.strip() for w in s.split(",") if w.strip()]

    @property
    def decoder_enabled(self) -> bool:
        if self.train_decoder == "auto":
            return self.task == "forecast"
        return self.train_decoder == "true"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def parse(cls, text: str, base_dir=None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
            kind = getattr(types[key], "__name__", types[key])
            try:
                if kind == "int":
                    values[key] = int(val)
                elif kind == "float":
                    values[key] = float(val)
                else:
                    values[key] = val
            except ValueError:
                raise ConfigError(f"config line {lineno}: bad {kind} value {val!r} for {key}") from None
        if base_dir is not None:
            for key in ("dataset", "vocab", "lm"):
                v = values.get(key)
                if v and v != "builtin" and not Path(v).is_absolute():
                    values[key] = str(Path(base_dir) / v)
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, base_dir=path.parent)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())
