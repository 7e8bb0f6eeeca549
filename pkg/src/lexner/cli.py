"""Command-line entry point.

Every subcommand reads ``--config FILE`` and then applies ``--key value``
overrides. Exit codes: 0 ok, 1 usage/config error, 2 data error,
3 numeric failure. Failures print one JSON line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from lexner import synthetic
from lexner.checkpoint import Checkpoint
from lexner.config import AppConfig, load_config
from lexner.corpus import Dataset, read_conll, tokenize_raw
from lexner.embeddings import load_pretrained
from lexner.errors import ConfigError, CorpusError, LexnerError
from lexner.evaluation import evaluate_model, predict_tags
from lexner.lexicon import Lexicon, build_stats, load_lexicon, stats_report
from lexner.trainer import metrics_csv, train

logger = logging.getLogger("lexner")

COMMANDS = ("train", "tag", "eval", "lexicon-stats", "learning-curve", "synth")


def _read_dataset(cfg: AppConfig, key: str) -> Dataset:
    with open(getattr(cfg, key), encoding="utf-8") as fh:
        try:
            return read_conll(fh, cfg.scheme)
        except CorpusError as err:
            raise CorpusError(f"{key}: {err}") from None


def _read_lexicon(cfg: AppConfig) -> Lexicon:
    with open(cfg.lexicon_path, encoding="utf-8") as fh:
        return load_lexicon(fh)


def _needs_lexicon(cfg: AppConfig) -> bool:
    return cfg.model.lexicon_mode != "none"


def _train_inputs(cfg: AppConfig, train_set: Dataset, test_set: Optional[Dataset]):
    lexicon = stats = None
    if _needs_lexicon(cfg):
        lexicon = _read_lexicon(cfg)
        stats = build_stats(lexicon, train_set.sentences, test_set.sentences if test_set else ())
    pretrained = None
    if cfg.pretrained_path:
        with open(cfg.pretrained_path, encoding="utf-8") as fh:
            pretrained = load_pretrained(fh, cfg.model.word_dim)
    return lexicon, stats, pretrained


def cmd_train(cfg: AppConfig) -> int:
    cfg.require("train_path")
    cfg.require("checkpoint_path", "output_dir", exist=False)
    if cfg.dev_path:
        cfg.require("dev_path")
    if cfg.test_path:
        cfg.require("test_path")
    if _needs_lexicon(cfg):
        cfg.require("lexicon_path")
    train_set = _read_dataset(cfg, "train_path")
    dev_set = _read_dataset(cfg, "dev_path") if cfg.dev_path else None
    test_set = _read_dataset(cfg, "test_path") if cfg.test_path else None
    lexicon, stats, pretrained = _train_inputs(cfg, train_set, test_set)
    result = train(train_set, dev_set, cfg.training, cfg.model, lexicon, stats, pretrained,
                   [test_set] if test_set else [])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    Path(cfg.checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(cfg.checkpoint_path)
    (out / "metrics.csv").write_text(metrics_csv(result.metrics), encoding="utf-8")
    best = result.checkpoint.best_dev_f1
    logger.info("saved %s (epoch %d, best dev F1 %s)", cfg.checkpoint_path, result.checkpoint.epoch,
                "-" if best is None else f"{best:.2f}")
    return 0


def _looks_like_conll(text: str, ckpt: Checkpoint) -> bool:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    if all(len(r) == 1 for r in rows):
        return "\n\n" in text.strip("\n")
    return all(len(r) >= 2 and r[-1] in ckpt.scheme for r in rows)


def _tag_input(text: str, fmt: str, ckpt: Checkpoint) -> Dataset:
    if fmt == "conll" or (fmt == "auto" and _looks_like_conll(text, ckpt)):
        return read_conll(text, ckpt.scheme)
    return Dataset(tuple(tokenize_raw(line) for line in text.splitlines() if line.strip()), ckpt.scheme)


def cmd_tag(cfg: AppConfig, stdin: TextIO, stdout: TextIO) -> int:
    cfg.require("checkpoint_path")
    ckpt = Checkpoint.load(cfg.checkpoint_path)
    if tuple(cfg.labels) != tuple(ckpt.scheme.labels):
        raise CorpusError(f"labels {list(cfg.labels)} do not match checkpoint {list(ckpt.scheme.labels)}")
    if cfg.input_path:
        cfg.require("input_path")
        text = Path(cfg.input_path).read_text(encoding="utf-8")
    else:
        text = stdin.read()
    data = _tag_input(text, cfg.input_format, ckpt)
    pred = predict_tags(ckpt.model, ckpt.featurizer(), data.sentences)
    lines = []
    for sent, tags in zip(data.sentences, pred):
        lines.extend(f"{w} {t}" for w, t in zip(sent.words, tags))
        lines.append("")
    rendered = "".join(line + "\n" for line in lines)
    if cfg.output_path:
        Path(cfg.output_path).write_text(rendered, encoding="utf-8")
    else:
        stdout.write(rendered)
    return 0


def cmd_eval(cfg: AppConfig, stdout: TextIO) -> int:
    cfg.require("checkpoint_path", "test_path")
    ckpt = Checkpoint.load(cfg.checkpoint_path)
    report = evaluate_model(ckpt, _read_dataset(cfg, "test_path"))
    stdout.write(report.to_table() + "\n")
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(report.to_csv(), encoding="utf-8")
    return 0


def cmd_lexicon_stats(cfg: AppConfig, stdout: TextIO) -> int:
    cfg.require("lexicon_path", "train_path")
    if cfg.test_path:
        cfg.require("test_path")
    lexicon = _read_lexicon(cfg)
    train_set = _read_dataset(cfg, "train_path")
    test = _read_dataset(cfg, "test_path").sentences if cfg.test_path else ()
    stats = build_stats(lexicon, train_set.sentences, test)
    stdout.write(stats_report(lexicon, stats, list(train_set.sentences) + list(test)) + "\n")
    return 0


def learning_curve_csv(cfg: AppConfig, train_set: Dataset, dev_set: Optional[Dataset], test_set: Dataset,
                       sizes: Sequence[int]) -> str:
    """Train on seeded-shuffle prefixes of ``train_set`` and score each run on ``test_set``."""
    if sizes and sizes[-1] > len(train_set):
        raise CorpusError(f"learning-curve size {sizes[-1]} exceeds the {len(train_set)} training sentences")
    order = np.random.default_rng(cfg.training.seed).permutation(len(train_set))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["size", *test_set.scheme.labels, "overall_f1"])
    for size in sizes:
        subset = train_set.subset(train_set.sentences[i] for i in order[:size])
        lexicon, stats, pretrained = _train_inputs(cfg, subset, test_set)
        result = train(subset, dev_set, cfg.training, cfg.model, lexicon, stats, pretrained, [test_set])
        report = evaluate_model(result.checkpoint, test_set)
        writer.writerow([size, *(f"{report.per_label[lab].f1:.2f}" for lab in test_set.scheme.labels),
                         f"{report.f1:.2f}"])
        logger.info("learning curve: size %d -> test F1 %.2f", size, report.f1)
    return out.getvalue()


def cmd_learning_curve(cfg: AppConfig) -> int:
    cfg.require("train_path", "test_path")
    cfg.require("output_dir", exist=False)
    if cfg.dev_path:
        cfg.require("dev_path")
    if _needs_lexicon(cfg):
        cfg.require("lexicon_path")
    train_set = _read_dataset(cfg, "train_path")
    dev_set = _read_dataset(cfg, "dev_path") if cfg.dev_path else None
    text = learning_curve_csv(cfg, train_set, dev_set, _read_dataset(cfg, "test_path"), cfg.sizes)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "learning_curve.csv").write_text(text, encoding="utf-8")
    return 0


def cmd_synth(cfg: AppConfig) -> int:
    cfg.require("output_dir", exist=False)
    synthetic.generate(seed=cfg.training.seed).write(cfg.output_dir)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _overrides(extra: Sequence[str]) -> list[tuple[str, str]]:
    pairs, i = [], 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError(f"usage: unexpected argument {arg!r}")
        key = arg[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(extra):
            value = extra[i + 1]
            i += 2
        else:
            raise ConfigError(f"{key}: missing value on the command line")
        pairs.append((key, value))
    return pairs


def run(argv: Optional[Sequence[str]] = None, stdin: TextIO = None, stdout: TextIO = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    parser = _Parser(prog="lexner", description="Lexicon-enhanced BiLSTM-CRF tagger.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--quiet", action="store_true", help="only log warnings")
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    cfg = load_config(args.config, _overrides(extra))
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "tag":
        return cmd_tag(cfg, stdin, stdout)
    if args.command == "eval":
        return cmd_eval(cfg, stdout)
    if args.command == "lexicon-stats":
        return cmd_lexicon_stats(cfg, stdout)
    if args.command == "learning-curve":
        return cmd_learning_curve(cfg)
    return cmd_synth(cfg)


def _error_line(kind: str, code: int, message: str) -> str:
    return json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())})


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return run(argv)
    except LexnerError as err:
        code, kind, message = err.exit_code, type(err).__name__, str(err)
    except OSError as err:
        code, kind, message = 2, "IOError", f"{err.filename or ''}: {err.strerror}"
    except ValueError as err:
        code, kind, message = 2, "DataError", str(err)
    print(_error_line(kind, code, message), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
