"""Mini-batch SGD with momentum, decayed learning rate and gradient clipping."""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from lexner.checkpoint import Checkpoint
from lexner.corpus import Dataset, validate_bio
from lexner.embeddings import CharVocab, EmbeddingTable, build_vocab, init_phrase_embeddings
from lexner.errors import CorpusError, NumericError
from lexner.evaluation import entity_f1, predict_tags
from lexner.features import LmVocab
from lexner.lexicon import Lexicon, LexiconStats
from lexner.network import ModelConfig, Tagger, init_params

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "dev_precision", "dev_recall", "dev_f1", "lr")


@dataclass(frozen=True)
class TrainConfig:
    eta0: float = 0.01
    rho: float = 0.05
    batch_size: int = 10
    momentum: float = 0.9
    clip_threshold: float = 5.0
    epochs: int = 50
    lm_weight: float = 1.0
    seed: int = 1

    def __post_init__(self):
        if self.eta0 <= 0 or self.rho < 0 or self.clip_threshold <= 0 or self.lm_weight < 0:
            raise ValueError("eta0 and clip_threshold must be positive; rho and lm_weight non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass
class OptimizerState:
    velocity: list = field(default_factory=list)
    epoch: int = 0


def lr_at(t: int, eta0: float, rho: float) -> float:
    return eta0 / (1.0 + rho * t)


def clip_gradients(grads: Sequence, threshold: float = 5.0):
    """Rescale in place so the global L2 norm is at most ``threshold``.

    Returns ``(grads, pre_clip_norm)``. Raises :class:`NumericError` on NaN/Inf.
    """
    sq = 0.0
    for g in grads:
        sq += float((g * g).sum())
    norm = math.sqrt(sq)
    if not math.isfinite(norm):
        bad = [i for i, g in enumerate(grads) if not bool(np.isfinite(np.asarray(g)).all())]
        raise NumericError(f"non-finite gradient in parameter group(s) {bad}")
    if norm > threshold:
        scale = threshold / norm
        for g in grads:
            g *= scale
    return grads, norm


def sgd_momentum_step(params: Sequence, grads: Sequence, state: OptimizerState, lr: float,
                      momentum: float = 0.9) -> OptimizerState:
    """Classical momentum: ``v = momentum * v - lr * g``; ``p += v``. Updates in place."""
    if not state.velocity:
        state.velocity = [g * 0.0 for g in grads]
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape:
            raise ValueError(f"parameter shape {tuple(p.shape)} vs gradient {tuple(g.shape)}")
        v *= momentum
        v -= lr * g
        p += v
    return state


def make_batches(items: Sequence, batch_size: int, seed: int, epoch: int) -> list[list]:
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    return [[items[i] for i in order[k:k + batch_size]] for k in range(0, len(items), batch_size)]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_precision: Optional[float]
    dev_recall: Optional[float]
    dev_f1: Optional[float]
    lr: float


def metrics_csv(records: Sequence[EpochRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for r in records:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                         for v in (r.epoch, r.train_loss, r.dev_precision, r.dev_recall, r.dev_f1, r.lr)])
    return out.getvalue()


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[EpochRecord]


def _sub_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0] >> 1)


def build_model(train: Dataset, model_config: ModelConfig, seed: int, lexicon: Optional[Lexicon] = None,
                stats: Optional[LexiconStats] = None, pretrained: Optional[EmbeddingTable] = None,
                other_splits: Sequence[Dataset] = ()) -> Checkpoint:
    """Vocabularies, embeddings and freshly initialised parameters, as an epoch-0 checkpoint."""
    mode = model_config.lexicon_mode
    if (mode != "none") != (lexicon is not None):
        raise ValueError(f"lexicon_mode {mode!r} {'needs' if mode != 'none' else 'does not take'} a lexicon")
    if pretrained is not None and pretrained.dim != model_config.word_dim:
        raise CorpusError(f"pretrained vectors have dim {pretrained.dim}, word_dim is {model_config.word_dim}")
    vocab, word_table = build_vocab(train.sentences, pretrained, seed, dim=model_config.word_dim,
                                    other_splits=[d.sentences for d in other_splits])
    chars = CharVocab.from_sentences(train.sentences)
    lm_vocab = LmVocab.from_sentences(train.sentences, model_config.lm_vocab_cap)
    model = Tagger(model_config, len(train.scheme), len(vocab), len(chars), len(lm_vocab),
                   0 if lexicon is None else len(lexicon))
    init_params(model, _sub_seed(seed, 1))
    with torch.no_grad():
        model.word_emb.weight.copy_(torch.from_numpy(word_table.vectors))
        if mode == "softlexicon":
            phrases = init_phrase_embeddings(lexicon, word_table, model_config.phrase_dim, _sub_seed(seed, 2))
            model.phrase_emb.copy_(torch.from_numpy(phrases.vectors))
    return Checkpoint(model_config, train.scheme, vocab, chars, lm_vocab, model,
                      lexicon, stats if mode == "softlexicon" else None)


def train(train_set: Dataset, dev_set: Optional[Dataset], config: TrainConfig, model_config: ModelConfig,
          lexicon: Optional[Lexicon] = None, stats: Optional[LexiconStats] = None,
          pretrained: Optional[EmbeddingTable] = None, other_splits: Sequence[Dataset] = ()) -> TrainResult:
    """Train a tagger; keep the parameters with the best dev entity F1 (last epoch without dev)."""
    if not len(train_set):
        raise CorpusError("empty training set")
    for k, sent in enumerate(train_set.sentences):
        if not sent.is_tagged:
            raise CorpusError(f"training sentence {k} has no tags")
        _, bad = validate_bio(sent.tags, train_set.scheme)
        if bad:
            raise CorpusError(f"training sentence {k}: invalid BIO at positions {bad}")
    splits = ([dev_set] if dev_set is not None else []) + list(other_splits)
    ckpt = build_model(train_set, model_config, config.seed, lexicon, stats, pretrained, splits)
    ckpt.train_config = asdict(config)
    model = ckpt.model
    featurizer = ckpt.featurizer()
    train_feats = [featurizer(s) for s in train_set.sentences]
    params = [p for _, p in model.named_parameters()]
    state = OptimizerState()
    records: list[EpochRecord] = []
    best_state, best_f1, best_epoch = None, None, 0

    for t in range(config.epochs):
        started = time.perf_counter()
        lr = lr_at(t, config.eta0, config.rho)
        state.epoch = t
        total = 0.0
        batches = make_batches(range(len(train_feats)), config.batch_size, config.seed, t)
        for b, idx in enumerate(batches):
            batch = [train_feats[i] for i in idx]
            gen = torch.Generator().manual_seed(_sub_seed(config.seed, t, b))
            model.zero_grad(set_to_none=False)
            nll, lm = model.losses(batch, train_mode=True, generator=gen)
            loss = (nll + config.lm_weight * lm).mean()
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {t + 1}, batch {b} (sentences {list(idx)})")
            loss.backward()
            grads = [p.grad for p in params]
            with torch.no_grad():
                clip_gradients(grads, config.clip_threshold)
                sgd_momentum_step(params, grads, state, lr, config.momentum)
            total += float(loss.detach()) * len(idx)
        train_loss = total / len(train_feats)

        p = r = f = None
        if dev_set is not None and len(dev_set):
            report = entity_f1([s.tags for s in dev_set.sentences],
                               predict_tags(model, featurizer, dev_set.sentences), dev_set.scheme)
            p, r, f = report.overall.precision, report.overall.recall, report.overall.f1
            if best_f1 is None or f > best_f1:
                best_f1, best_epoch = f, t + 1
                best_state = copy.deepcopy(model.state_dict())
        records.append(EpochRecord(t + 1, train_loss, p, r, f, lr))
        logger.info("epoch %d  loss %.4f  dev F1 %s  lr %.5f  (%.1fs)", t + 1, train_loss,
                    "-" if f is None else f"{f:.2f}", lr, time.perf_counter() - started)

    if best_state is not None:
        model.load_state_dict(best_state)
        ckpt.epoch, ckpt.best_dev_f1 = best_epoch, best_f1
    else:
        ckpt.epoch = config.epochs
    return TrainResult(ckpt, records)
