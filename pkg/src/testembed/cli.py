"""``test-embed`` command line: every report is a JSON line on stdout."""

from __future__ import annotations

import argparse
import json
import sys

from . import data, synthetic
from .config import RunConfig
from .errors import TestEmbedError, UsageError
from .pipeline import Checkpoint, evaluate, match_words, train_phase1, train_phase2
from .prototypes import load_vocab


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(record: dict, out) -> None:
    out.write(json.dumps(record, sort_keys=True) + "\n")


def _load_data(path, ckpt: Checkpoint):
    try:
        return data.load_dataset(path, task=ckpt.config.get("task"))
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc.strerror}") from None


def cmd_gen_data(args, out):
    series = synthetic.generate(args.suite, seed=args.seed)
    data.write_dataset(args.out, series)
    _emit({"command": "gen-data", "suite": args.suite, "seed": args.seed, "n": len(series), "out": args.out}, out)


def cmd_train_encoder(args, out):
    cfg = RunConfig.from_file(args.config)
    ckpt = train_phase1(cfg)
    for rec in ckpt.history:
        _emit({"phase": "phase1", **rec}, out)
    ckpt.save(args.out)
    _emit({"command": "train-encoder", "out": args.out, "checksum": ckpt.checksum()}, out)


def cmd_train_prompt(args, out):
    cfg = RunConfig.from_file(args.config)
    start = Checkpoint.load(getattr(args, "from"))
    ckpt = train_phase2(cfg, start)
    for rec in ckpt.history[len(start.history):]:
        _emit({"phase": "phase2", **rec}, out)
    ckpt.save(args.out)
    _emit({"command": "train-prompt", "out": args.out, "checksum": ckpt.checksum()}, out)


def cmd_eval(args, out):
    ckpt = Checkpoint.load(args.ckpt)
    _emit({"command": "eval", **evaluate(ckpt, _load_data(args.data, ckpt))}, out)


def cmd_match_words(args, out):
    if args.n < 0:
        raise UsageError("-n must be >= 0")
    ckpt = Checkpoint.load(args.ckpt)
    report = match_words(ckpt, _load_data(args.data, ckpt), load_vocab(args.vocab), args.n)
    for tok in report["tokens"]:
        _emit(tok, out)
    _emit({"command": "match-words", "n": args.n, "frequencies": report["frequencies"]}, out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="test-embed", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a shipped synthetic suite")
    g.add_argument("--suite", choices=("cls3", "ar2"), required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    e = sub.add_parser("train-encoder", help="phase 1: contrastive encoder training")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_train_encoder)

    t = sub.add_parser("train-prompt", help="phase 2: soft prompt and head over the frozen LM")
    t.add_argument("--config", required=True)
    t.add_argument("--from", required=True, metavar="CKPT")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_prompt)

    v = sub.add_parser("eval", help="accuracy or forecast error of a phase-2 checkpoint")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--data", required=True)
    v.set_defaults(func=cmd_eval)

    m = sub.add_parser("match-words", help="nearest vocabulary words of token embeddings")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--vocab", required=True)
    m.add_argument("-n", type=int, default=5)
    m.set_defaults(func=cmd_match_words)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.func(args, out)
    except (TestEmbedError, OSError, KeyError, ValueError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        err.write(f"test-embed: error: {msg}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
