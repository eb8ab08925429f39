"""Seeded generators for the shipped toy vocabulary and frozen LM checkpoint.

The files under ``testembed/resources/`` are the output of :func:`write_builtin`
and are regenerated bit-identically from the seeds below.
"""

from __future__ import annotations

from importlib import resources as _res
from pathlib import Path

import numpy as np

from . import container
from .prototypes import VocabMatrix, load_vocab, save_vocab

VOCAB_SEED = 20230816
LM_SEED = 20230817
VOCAB_SIZE = 512
WIDTH = 64

WORDS = """
the a of to and in is it that for on with as by at from this be are was
classify given sequence series time forecast predict next label class value shape frequency
small big large tiny up down rise fall stable fluctuating flat steep smooth rough sharp
high low peak valley trend cycle period wave pulse spike noise signal pattern
sine square sawtooth triangle step ramp slope level
good bad happy sad great terrible calm angry joy fear love hate nice awful pleasant
positive negative neutral excellent poor strong weak bright dark warm cold
hope worry relief stress delight anger trust doubt pride shame
one two three four five many few more less most
begin end start stop early late fast slow long short
""".split()


def builtin_words() -> list[str]:
    seen, words = set(), []
    for w in WORDS:
        if w not in seen:
            seen.add(w)
            words.append(w)
    words += [f"tok{i:03d}" for i in range(VOCAB_SIZE - len(words))]
    return words


def make_vocab(seed: int = VOCAB_SEED, size: int = VOCAB_SIZE, width: int = WIDTH) -> VocabMatrix:
    """Anisotropic random embeddings: a decaying spectrum on random axes plus noise."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(width, width)))
    spectrum = 1.2 * 0.9 ** np.arange(width)
    emb = (rng.normal(size=(size, width)) * spectrum) @ q.T + 0.02 * rng.normal(size=(size, width))
    return VocabMatrix(emb.astype(np.float32), builtin_words()[:size])


def make_lm(vocab: VocabMatrix, seed: int = LM_SEED):
    from .promptlm import FrozenLM, LMConfig

    return FrozenLM(LMConfig(width=vocab.M), seed=seed, tok_emb=vocab.embeddings)


def resource_dir() -> Path:
    return Path(str(_res.files("testembed") / "resources"))


def builtin_vocab_path() -> Path:
    return resource_dir() / "vocab.tste"


def builtin_lm_path() -> Path:
    return resource_dir() / "lm.tste"


def load_builtin_vocab() -> VocabMatrix:
    return load_vocab(builtin_vocab_path())


def load_lm(path):
    from .promptlm import FrozenLM

    return FrozenLM.from_state(container.load(path))


def load_builtin_lm():
    return load_lm(builtin_lm_path())


def write_builtin(out_dir=None) -> None:
    out = Path(out_dir) if out_dir else resource_dir()
    out.mkdir(parents=True, exist_ok=True)
    vocab = make_vocab()
    save_vocab(out / "vocab.tste", vocab)
    container.save(out / "lm.tste", make_lm(vocab).state_dict())


if __name__ == "__main__":
    write_builtin()
