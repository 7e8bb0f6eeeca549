import pytest
import torch

from lexner.corpus import Dataset, Sentence, TagScheme
from lexner.lexicon import Lexicon, build_stats
from lexner.network import ModelConfig
from lexner.trainer import build_model

SCHEME = TagScheme()

TINY = [
    (["Launching", "the", "multistage", "rocket", "motor"], ["O", "O", "B-PCT", "I-PCT", "I-PCT"]),
    (["US", "armed", "forces", "said"], ["B-ORG", "I-ORG", "I-ORG", "O"]),
    (["Rogers"], ["B-PER"]),
]
TINY_LEXICON = [["multistage", "rocket"], ["rocket", "motor"], ["us", "armed", "forces"], ["rogers"]]


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    torch.set_num_threads(1)


def tiny_dataset():
    return Dataset(tuple(Sentence.from_lists(w, t) for w, t in TINY), SCHEME)


def tiny_model(mode, seed=0, **overrides):
    """Small network over the 3-sentence batch, plus its featurized sentences."""
    ds = tiny_dataset()
    lex = Lexicon(TINY_LEXICON) if mode != "none" else None
    stats = build_stats(lex, ds.sentences) if lex else None
    params = dict(word_dim=6, char_dim=4, hidden=5, phrase_dim=3, lexicon_mode=mode, dropout=0.5)
    params.update(overrides)
    ckpt = build_model(ds, ModelConfig(**params), seed, lex, stats)
    feats = [ckpt.featurizer()(s) for s in ds.sentences]
    return ckpt, feats
