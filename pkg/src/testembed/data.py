"""Time-series records, tokenization, augmentation and pair sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, ParseError, SamplingError, ShapeError


@dataclass
class TimeSeries:
    values: np.ndarray  # [D, T]
    label: int | None = None
    target: np.ndarray | None = None  # [D, horizon]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise ShapeError(f"series values must be [D, T], got shape {v.shape}")
        if v.shape[1] < 4:
            raise ShapeError(f"series needs at least 4 time points, got {v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("series values must be finite")
        self.values = v
        if self.target is not None:
            t = np.asarray(self.target, dtype=np.float32)
            if t.ndim == 1:
                t = t[None, :] if v.shape[0] == 1 else t[:, None]
            self.target = t

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        if self.label != other.label or not np.array_equal(self.values, other.values):
            return False
        if (self.target is None) != (other.target is None):
            return False
        return self.target is None or np.array_equal(self.target, other.target)


@dataclass
class TsToken:
    values: np.ndarray  # [D, L]
    source: int
    start: int  # inclusive, 0-based
    end: int  # exclusive
    view: str = "raw"  # raw | weak | strong

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def indices(self) -> range:
        return range(self.start, self.end)

    def overlaps(self, other: "TsToken") -> bool:
        return self.source == other.source and self.start < other.end and other.start < self.end


@dataclass
class AugmentConfig:
    jitter_sigma: float = 0.08
    scale_sigma: float = 0.1
    max_segments: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.scale_sigma < 0:
            raise ParameterError("augmentation sigmas must be non-negative")
        if self.max_segments < 1:
            raise ParameterError("max_segments must be >= 1")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def segment(x: TimeSeries, len_range: Sequence[int], step_range: Sequence[int], seed=0,
            source: int = 0) -> list[TsToken]:
    """Cut ``x`` into windows of random length and random advance, left to right.

    Lengths and steps are drawn uniformly (inclusive) from the two ranges.  A
    window that would run past the end is shortened to the remaining points;
    the walk stops once fewer than ``len_range[0]`` points remain.
    """
    lo, hi = int(len_range[0]), int(len_range[1])
    slo, shi = int(step_range[0]), int(step_range[1])
    if lo < 4 or hi < lo:
        raise ParameterError(f"bad length range {len_range}; minimum length is 4")
    if slo < 1 or shi < slo:
        raise ParameterError(f"bad step range {step_range}")
    rng = _rng(seed)
    T = x.T
    tokens: list[TsToken] = []
    start = 0
    while T - start >= lo:
        length = min(int(rng.integers(lo, hi + 1)), T - start)
        tokens.append(TsToken(x.values[:, start : start + length], source, start, start + length))
        start += int(rng.integers(slo, shi + 1))
    return tokens


def augment_weak(s: TsToken, cfg: AugmentConfig, rng=None) -> TsToken:
    """Jitter-and-scale: per-channel scale (1 + gamma) plus per-point noise."""
    rng = _rng(cfg.seed if rng is None else rng)
    D, L = s.values.shape
    gamma = rng.normal(0.0, cfg.scale_sigma, size=(D, 1)) if cfg.scale_sigma > 0 else np.zeros((D, 1))
    eps = rng.normal(0.0, cfg.jitter_sigma, size=(D, L)) if cfg.jitter_sigma > 0 else 0.0
    out = (s.values * (1.0 + gamma) + eps).astype(np.float32)
    return replace(s, values=out, view="weak")


def augment_strong(s: TsToken, cfg: AugmentConfig, rng=None) -> TsToken:
    """Permutation-and-jitter: shuffle a random number of contiguous chunks, then add noise."""
    D, L = s.values.shape
    if cfg.max_segments > L:
        raise ParameterError(f"max_segments={cfg.max_segments} exceeds token length {L}")
    rng = _rng(cfg.seed if rng is None else rng)
    n = int(rng.integers(1, cfg.max_segments + 1))
    cuts = np.sort(rng.choice(np.arange(1, L), size=n - 1, replace=False)) if n > 1 else np.array([], int)
    chunks = np.split(s.values, cuts, axis=1)
    order = rng.permutation(n)
    out = np.concatenate([chunks[i] for i in order], axis=1)
    if cfg.jitter_sigma > 0:
        out = out + rng.normal(0.0, cfg.jitter_sigma, size=(D, L))
    return replace(s, values=out.astype(np.float32), view="strong")


def sample_pairs(tokens: Sequence[TsToken], anchor: int, seed=0, overlap_ratio: float = 0.5,
                 aug: AugmentConfig | None = None):
    """Return ``(anchor, positive, negatives)`` for ``tokens[anchor]``.

    With probability ``overlap_ratio`` the positive is a token overlapping the
    anchor in the same series (when one exists); otherwise it is a weak
    augmentation of the anchor.  Negatives are all tokens sharing no time
    index with the anchor.
    """
    if len(tokens) < 2:
        raise SamplingError("need at least two tokens to sample pairs")
    rng = _rng(seed)
    a = tokens[anchor]
    overlapping = [t for i, t in enumerate(tokens) if i != anchor and t.overlaps(a)]
    negatives = [t for t in tokens if not t.overlaps(a)]
    if not negatives:
        raise SamplingError("no token is disjoint from the anchor")
    if overlapping and rng.random() < overlap_ratio:
        positive = overlapping[int(rng.integers(len(overlapping)))]
    else:
        positive = augment_weak(a, aug or AugmentConfig(), rng)
    return a, positive, negatives


# ---------------------------------------------------------------- CSV I/O

def _parse_matrix(body: str, lineno: int, expect_d: int | None = None) -> np.ndarray:
    steps = body.split(",")
    rows = []
    for step in steps:
        cells = step.split()
        if not cells:
            raise ParseError("empty time step", lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ParseError(f"non-numeric cell in {step.strip()!r}", lineno) from None
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError("inconsistent channel count within series", lineno)
    d = widths.pop()
    if expect_d is not None and d != expect_d:
        raise ParseError(f"series has {d} channels, expected {expect_d}", lineno)
    arr = np.asarray(rows, dtype=np.float64).T
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite value", lineno)
    return arr.astype(np.float32)


def _is_int_literal(s: str) -> bool:
    s = s.strip()
    return s.lstrip("+-").isdigit()


def parse_dataset(text: str, task: str | None = None) -> list[TimeSeries]:
    """Parse the ``head;values`` line format.

    ``head`` is an integer class label, a float forecasting target (same
    comma/space grammar as values, one comma-separated step per horizon
    step), or empty.  With ``task=None`` an integer literal is read as a label
    and anything else as a target.
    """
    out: list[TimeSeries] = []
    D = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if ";" not in line:
            raise ParseError("missing ';' between label/target and values", lineno)
        head, body = line.split(";", 1)
        values = _parse_matrix(body, lineno, D)
        D = values.shape[0]
        if values.shape[1] < 4:
            raise ParseError("series shorter than 4 points", lineno)
        label = target = None
        head = head.strip()
        if head:
            as_label = task == "classify" or (task is None and _is_int_literal(head))
            if as_label:
                if not _is_int_literal(head):
                    raise ParseError(f"label {head!r} is not an integer", lineno)
                label = int(head)
            else:
                target = _parse_matrix(head, lineno, D)
        out.append(TimeSeries(values, label=label, target=target))
    return out


def load_dataset(path, task: str | None = None) -> list[TimeSeries]:
    return parse_dataset(Path(path).read_text(encoding="utf-8"), task)


def _fmt(v) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="0")


def _format_matrix(m: np.ndarray) -> str:
    return ",".join(" ".join(_fmt(v) for v in col) for col in np.asarray(m).T)


def format_dataset(series: Sequence[TimeSeries]) -> str:
    lines = []
    for s in series:
        if s.label is not None:
            head = str(int(s.label))
        elif s.target is not None:
            head = _format_matrix(s.target)
        else:
            head = ""
        lines.append(f"{head};{_format_matrix(s.values)}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_dataset(path, series: Sequence[TimeSeries]) -> None:
    Path(path).write_text(format_dataset(series), encoding="utf-8")
