import math

import numpy as np
import pytest
import torch

from conftest import tiny_dataset
from lexner.checkpoint import Checkpoint
from lexner.errors import CorpusError, NumericError
from lexner.evaluation import evaluate_model
from lexner.lexicon import Lexicon, build_stats
from lexner.network import ModelConfig
from lexner.trainer import (
    OptimizerState,
    TrainConfig,
    clip_gradients,
    lr_at,
    make_batches,
    metrics_csv,
    sgd_momentum_step,
    train,
)

SMALL = dict(word_dim=6, char_dim=4, hidden=5, phrase_dim=3)


def test_lr_schedule():
    assert lr_at(0, 0.01, 0.05) == 0.01
    assert lr_at(20, 0.01, 0.05) == 0.01 / 2
    assert lr_at(100, 0.01, 0.05) == pytest.approx(0.01 / 6, rel=1e-15)
    rates = [lr_at(t, 0.01, 0.05) for t in range(50)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_clip_below_threshold_is_identity():
    g = [np.array([3.0, 0.0])]
    out, norm = clip_gradients(g, 5.0)
    assert norm == 3.0 and out[0].tolist() == [3.0, 0.0]


def test_clip_halves_at_norm_ten():
    g = [np.array([6.0]), np.array([0.0, 8.0])]
    _, norm = clip_gradients(g, 5.0)
    assert norm == 10.0
    assert g[0].tolist() == [3.0] and g[1].tolist() == [0.0, 4.0]


def test_clip_random_post_norm():
    rng = np.random.default_rng(0)
    for _ in range(200):
        grads = [torch.from_numpy(rng.normal(size=s) * rng.uniform(0.01, 5)) for s in [(3, 4), (7,), (2, 2)]]
        _, pre = clip_gradients(grads, 5.0)
        post = math.sqrt(sum(float((g * g).sum()) for g in grads))
        assert abs(post - min(pre, 5.0)) < 1e-9


def test_clip_rejects_non_finite():
    with pytest.raises(NumericError):
        clip_gradients([np.array([1.0, np.nan])], 5.0)


def test_momentum_first_step():
    p, g = torch.tensor([1.0], dtype=torch.float64), torch.tensor([1.0], dtype=torch.float64)
    state = sgd_momentum_step([p], [g], OptimizerState(), lr=0.1, momentum=0.9)
    assert float(p) == pytest.approx(0.9, abs=1e-15)
    assert float(state.velocity[0]) == pytest.approx(-0.1, abs=1e-15)


def test_momentum_geometric_drift():
    p, g = np.array([0.0]), np.array([1.0])
    state = sgd_momentum_step([p], [g], OptimizerState(), lr=0.1, momentum=0.9)
    v0, after_first = float(state.velocity[0][0]), float(p[0])
    zero = np.array([0.0])
    for _ in range(400):
        sgd_momentum_step([p], [zero], state, lr=0.1, momentum=0.9)
    assert p[0] - after_first == pytest.approx(v0 * 0.9 / (1 - 0.9), rel=1e-12)


def test_momentum_zero_is_plain_sgd():
    p = np.array([2.0, -1.0])
    sgd_momentum_step([p], [np.array([1.0, -2.0])], OptimizerState(), lr=0.5, momentum=0.0)
    assert p.tolist() == [1.5, 0.0]


def test_make_batches():
    items = list(range(25))
    batches = make_batches(items, 10, seed=3, epoch=1)
    assert [len(b) for b in batches] == [10, 10, 5]
    assert batches == make_batches(items, 10, seed=3, epoch=1)
    assert sorted(x for b in batches for x in b) == items
    assert batches != make_batches(items, 10, seed=3, epoch=2)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def _train_tiny(mode="softlexicon", epochs=3, dev=True, seed=0):
    ds = tiny_dataset()
    lex = Lexicon([["multistage", "rocket"], ["rocket", "motor"]]) if mode != "none" else None
    stats = build_stats(lex, ds.sentences) if lex else None
    return train(ds, ds if dev else None, TrainConfig(epochs=epochs, batch_size=2, eta0=0.05, seed=seed),
                 ModelConfig(lexicon_mode=mode, **SMALL), lex, stats)


def test_zero_epochs_returns_initial_model():
    res = _train_tiny(epochs=0)
    assert res.metrics == []
    assert res.checkpoint.epoch == 0 and res.checkpoint.best_dev_f1 is None


def test_training_is_reproducible_and_checkpoint_round_trips(tmp_path):
    a, b = _train_tiny(), _train_tiny()
    assert a.checkpoint.to_bytes() == b.checkpoint.to_bytes()
    assert metrics_csv(a.metrics) == metrics_csv(b.metrics)
    path = tmp_path / "model.ckpt"
    a.checkpoint.save(path)
    loaded = Checkpoint.load(path)
    for (name, p), (_, q) in zip(a.checkpoint.model.state_dict().items(), loaded.model.state_dict().items()):
        assert torch.equal(p, q), name
    assert loaded.to_bytes() == a.checkpoint.to_bytes()
    assert evaluate_model(loaded, tiny_dataset()).f1 == a.checkpoint.best_dev_f1


def test_metrics_csv_layout():
    res = _train_tiny(epochs=2)
    lines = metrics_csv(res.metrics).splitlines()
    assert lines[0] == "epoch,train_loss,dev_precision,dev_recall,dev_f1,lr"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert float(lines[2].split(",")[-1]) == lr_at(1, 0.05, 0.05)


def test_without_dev_keeps_last_epoch():
    res = _train_tiny(epochs=2, dev=False)
    assert res.checkpoint.epoch == 2
    assert res.metrics[0].dev_f1 is None
    assert metrics_csv(res.metrics).splitlines()[1].split(",")[2:5] == ["", "", ""]


def test_train_rejects_invalid_bio():
    from lexner.corpus import Dataset, Sentence, TagScheme
    ds = Dataset((Sentence.from_lists(["a", "b"], ["O", "I-PER"]),), TagScheme())
    with pytest.raises(CorpusError, match="invalid BIO"):
        train(ds, None, TrainConfig(epochs=1), ModelConfig(lexicon_mode="none", **SMALL))


def test_post_clip_norm_bounded_during_training(monkeypatch):
    from lexner import trainer
    seen = []
    original = trainer.clip_gradients

    def spy(grads, threshold):
        out = original(grads, threshold)
        seen.append(math.sqrt(sum(float((g * g).sum()) for g in grads)))
        return out

    monkeypatch.setattr(trainer, "clip_gradients", spy)
    _train_tiny(epochs=2)
    assert seen and max(seen) <= 5.0 + 1e-9


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CorpusError, match="magic"):
        Checkpoint.load(path)
    data = bytearray(_train_tiny(epochs=0).checkpoint.to_bytes())
    data[8] = 99
    with pytest.raises(CorpusError, match="version"):
        Checkpoint.from_bytes(bytes(data))
