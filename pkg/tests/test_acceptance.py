"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -v``. Lines are printed
even when pytest captures output.
"""

import math
import random
import time

import numpy as np
import pytest
import torch

from conftest import tiny_model
from lexner import crf, synthetic
from lexner.cli import learning_curve_csv, run
from lexner.config import resolve
from lexner.corpus import EntitySpan, TagScheme, spans_to_tags
from lexner.evaluation import entity_f1, evaluate_model
from lexner.lexicon import BMESWordSets, Lexicon, LexiconStats, build_stats, load_lexicon, match_bmes, set_vector
from lexner.network import ModelConfig
from lexner.trainer import TrainConfig, clip_gradients, lr_at, train

import test_crf
import test_evaluation
import test_lexicon

# Desk-scale network for the runs on the synthetic corpus: hidden=100 instead
# of 300 keeps two 500-sentence runs inside the 10-minute single-core budget.
DESK_MODEL = dict(hidden=100)
DESK_TRAIN = dict(eta0=0.05, seed=1)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


@pytest.fixture(scope="module")
def corpus():
    return synthetic.generate(seed=0)


def test_synthetic_softlexicon_beats_baseline(report, corpus):
    started = time.perf_counter()
    lexicon = load_lexicon(corpus.lexicon_text())
    scores = {}
    for mode in ("none", "softlexicon"):
        lex = lexicon if mode != "none" else None
        stats = build_stats(lex, corpus.train.sentences, corpus.test.sentences) if lex else None
        result = train(corpus.train, corpus.dev, TrainConfig(epochs=10, **DESK_TRAIN),
                       ModelConfig(lexicon_mode=mode, **DESK_MODEL), lex, stats, other_splits=[corpus.test])
        scores[mode] = evaluate_model(result.checkpoint, corpus.test).f1
    elapsed = time.perf_counter() - started
    gap = scores["softlexicon"] - scores["none"]
    report("synthetic softlexicon vs none", gap >= 2.0 and elapsed <= 600,
           f"test F1 none={scores['none']:.2f} softlexicon={scores['softlexicon']:.2f} "
           f"gap={gap:.2f} (need >= 2.0), {elapsed:.0f}s (limit 600s), 10 epochs each")


def test_bmes_matcher_oracle(report):
    rng = random.Random(2024)
    started = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        words, phrases = test_lexicon.random_case(rng)
        lex = Lexicon(phrases)
        got = [s.blocks() for s in match_bmes(words, lex)]
        mismatches += got != test_lexicon.brute_force_bmes(words, set(lex.phrases))
    elapsed = time.perf_counter() - started
    report("BMES matcher oracle", mismatches == 0 and elapsed <= 10,
           f"{mismatches} mismatches in 1000 pairs, {elapsed:.2f}s (limit 10s)")


def test_set_vector_oracle(report):
    worst = 0.0
    got = set_vector(test_lexicon.ROCKET_SETS, test_lexicon.ROCKET_STATS, test_lexicon.ROCKET_EMB)
    expected = np.array([5, 0, 0, 0, 2, 5, 0, 0]) / 14
    worst = float(np.max(np.abs(got - expected)) / np.max(np.abs(expected)))
    rng = np.random.default_rng(99)
    for _ in range(1000):
        phrases = [f"p{k}" for k in range(rng.integers(1, 8))]
        blocks = [tuple(p for p in phrases if rng.random() < 0.4) or ("NONE",) for _ in range(4)]
        z = {p: int(rng.integers(0, 20)) for p in phrases}
        c = int(rng.integers(1, 6))
        emb = {p: rng.normal(size=5) for p in phrases + ["NONE"]}
        sets = BMESWordSets(*blocks)
        got = set_vector(sets, LexiconStats(z, c), emb)
        ref = test_lexicon.direct_sum(sets, z, c, emb)
        worst = max(worst, float(np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-300)))
    report("weighted set vector oracle", worst <= 1e-9,
           f"max relative error {worst:.2e} over rocket example + 1000 cases (limit 1e-9)")


def test_crf_oracle(report):
    rng = np.random.default_rng(7)
    started = time.perf_counter()
    draws = 0
    err = dict(viterbi=0, log_z=0.0, norm=0.0, nll=0.0)
    for n in range(1, 7):
        for k in range(1, 6):
            for _ in range(5 if k ** n < 5000 else 2):
                em, T = test_crf.random_instance(rng, n, k)
                paths = test_crf.enumerate_paths(em, T)
                scores = [s for _, s in paths]
                ref_z = test_crf.lse(scores)
                log_z = float(crf.log_partition(em, T))
                err["log_z"] = max(err["log_z"], abs(log_z - ref_z))
                err["norm"] = max(err["norm"], abs(sum(math.exp(s - log_z) for s in scores) - 1.0))
                best = max(paths, key=lambda ps: ps[1])[0]
                err["viterbi"] += crf.viterbi_decode(em, T).tags != best
                gold, gold_score = paths[int(rng.integers(len(paths)))]
                err["nll"] = max(err["nll"], abs(float(crf.crf_nll(em, T, gold)) - (ref_z - gold_score)))
                draws += 1
    elapsed = time.perf_counter() - started
    ok = (draws >= 100 and err["viterbi"] == 0 and err["log_z"] <= 1e-8 and err["norm"] <= 1e-6
          and err["nll"] <= 1e-8 and elapsed <= 30)
    report("CRF enumeration oracle", ok,
           f"{draws} draws, viterbi mismatches {err['viterbi']}, logZ err {err['log_z']:.1e} (1e-8), "
           f"normalization err {err['norm']:.1e} (1e-6), nll err {err['nll']:.1e} (1e-8), {elapsed:.1f}s (30s)")


def _batch_loss(model, feats, seed):
    gen = torch.Generator().manual_seed(seed)
    nll, lm = model.losses(feats, train_mode=True, generator=gen)
    return (nll + lm).mean()


def _gradient_check(mode):
    """Worst per-group relative error between autograd and central differences."""
    ckpt, feats = tiny_model(mode, seed=3)
    model = ckpt.model
    model.zero_grad()
    _batch_loss(model, feats, 11).backward()
    h = 1e-4
    worst, worst_name = 0.0, ""
    with torch.no_grad():
        for name, p in model.named_parameters():
            analytic = p.grad.detach().clone().reshape(-1)
            numeric = torch.zeros_like(analytic)
            flat = p.view(-1)
            for i in range(flat.numel()):
                old = float(flat[i])
                flat[i] = old + h
                up = float(_batch_loss(model, feats, 11))
                flat[i] = old - h
                down = float(_batch_loss(model, feats, 11))
                flat[i] = old
                numeric[i] = (up - down) / (2 * h)
            denom = float(analytic.norm() + numeric.norm())
            rel = 0.0 if denom == 0 else float((analytic - numeric).norm()) / denom
            if rel > worst:
                worst, worst_name = rel, name
    return worst, worst_name


@pytest.mark.parametrize("mode", ["none", "exsoftword", "softlexicon"])
def test_gradient_check(report, mode):
    worst, name = _gradient_check(mode)
    report(f"gradient check ({mode})", worst < 1e-4,
           f"worst per-group relative error {worst:.2e} in {name or '-'} (limit 1e-4), h=1e-4, float64")


def test_schedule_and_clipping(report):
    eta0 = 0.01
    halved = lr_at(20, eta0, 0.05) == eta0 / 2
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        grads = [rng.normal(size=s) * rng.uniform(0.01, 6) for s in [(4, 3), (9,), (2, 5)]]
        _, pre = clip_gradients(grads, 5.0)
        post = math.sqrt(sum(float((g * g).sum()) for g in grads))
        worst = max(worst, abs(post - min(pre, 5.0)))
    report("schedule and clipping", halved and worst <= 1e-9,
           f"lr_at(20)={lr_at(20, eta0, 0.05)!r} vs eta0/2={eta0 / 2!r}; max |post - min(pre, 5)| {worst:.1e} (1e-9)")


def test_overfit_toy_corpus(report, corpus):
    toy = corpus.train.subset(corpus.train.sentences[:20])
    started = time.perf_counter()
    result = train(toy, toy, TrainConfig(epochs=150, eta0=0.05, seed=1),
                   ModelConfig(lexicon_mode="none", word_dim=50, char_dim=20, hidden=50))
    elapsed = time.perf_counter() - started
    f1 = evaluate_model(result.checkpoint, toy).f1
    first = next((r.epoch for r in result.metrics if r.dev_f1 == 100.0), None)
    report("overfit 20-sentence toy corpus", f1 == 100.0 and elapsed <= 120,
           f"train F1 {f1:.2f} (first 100 at epoch {first}), {elapsed:.0f}s (limit 120s)")


def test_evaluator_oracle(report):
    scheme = TagScheme()
    gold = [spans_to_tags([EntitySpan(0, 2, "PER"), EntitySpan(5, 7, "ORG")], 10)]
    pred = [spans_to_tags([EntitySpan(0, 2, "PER"), EntitySpan(5, 6, "ORG"), EntitySpan(8, 9, "PCT")], 10)]
    rep = entity_f1(gold, pred, scheme)
    worked = (f"{rep.overall.precision:.2f}", f"{rep.overall.recall:.2f}", f"{rep.f1:.2f}") == \
        ("33.33", "50.00", "40.00")
    bad = []
    for g, p, counts in test_evaluation.CRAFTED:
        o = entity_f1([g], [p], scheme).overall
        if (o.gold, o.pred, o.correct) != counts:
            bad.append((g, p))
    report("evaluator crafted suite", worked and not bad,
           f"P/R/F1 = {rep.overall.precision:.2f}/{rep.overall.recall:.2f}/{rep.f1:.2f} (want 33.33/50.00/40.00); "
           f"{len(test_evaluation.CRAFTED) - len(bad)}/{len(test_evaluation.CRAFTED)} crafted cases exact")


def test_determinism_via_cli(report, corpus, tmp_path):
    corpus.write(tmp_path / "data")
    outputs = []
    for run_id in ("a", "b"):
        out = tmp_path / run_id
        args = ["train", "--quiet", "--train_path", str(tmp_path / "data/train.conll"),
                "--dev_path", str(tmp_path / "data/dev.conll"), "--test_path", str(tmp_path / "data/test.conll"),
                "--lexicon_path", str(tmp_path / "data/lexicon.txt"), "--checkpoint_path", str(out / "model.ckpt"),
                "--output_dir", str(out), "--hidden", "30", "--word_dim", "30", "--phrase_dim", "20",
                "--epochs", "2", "--eta0", "0.05"]
        assert run(args) == 0
        outputs.append(((out / "model.ckpt").read_bytes(), (out / "metrics.csv").read_bytes()))
    same_ckpt = outputs[0][0] == outputs[1][0]
    same_csv = outputs[0][1] == outputs[1][1]
    report("determinism of full train runs", same_ckpt and same_csv,
           f"checkpoints identical={same_ckpt} ({len(outputs[0][0])} bytes), metric CSVs identical={same_csv}")


def test_learning_curve(report, corpus, tmp_path):
    (tmp_path / "lexicon.txt").write_text(corpus.lexicon_text(), encoding="utf-8")
    cfg = resolve({"epochs": "8", "eta0": "0.05", "hidden": "100", "seed": "1",
                   "lexicon_path": str(tmp_path / "lexicon.txt")})
    text = learning_curve_csv(cfg, corpus.train, corpus.dev, corpus.test, [50, 100, 200, 400])
    lines = text.strip().splitlines()
    header_ok = lines[0] == "size,PER,ORG,PCT,OUT,SER,TIM,overall_f1"
    rows = [line.split(",") for line in lines[1:]]
    shape_ok = len(rows) == 4 and all(len(r) == 8 for r in rows) and [int(r[0]) for r in rows] == [50, 100, 200, 400]
    overall = [float(r[-1]) for r in rows]
    report("learning curve", header_ok and shape_ok and overall[-1] >= overall[0],
           f"overall F1 by size {dict(zip([50, 100, 200, 400], overall))}; final >= first "
           f"{overall[-1] >= overall[0]}; schema ok {header_ok and shape_ok}")
