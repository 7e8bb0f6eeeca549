"""Turn sentences into the index arrays the network consumes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from lexner.corpus import Sentence, TagScheme
from lexner.embeddings import BOUNDARY, UNK, CharVocab, Vocab
from lexner.lexicon import NONE, Lexicon, LexiconStats, match_bmes, flags_from_sets, set_weights

LEXICON_MODES = ("none", "exsoftword", "softlexicon")


class LmVocab:
    """Capped word vocabulary for the language-model heads. ``<unk>`` is 0."""

    def __init__(self, words: Sequence[str]):
        self.itos = [UNK] + list(words)
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence], cap: int) -> "LmVocab":
        counts = Counter(w for s in sentences for w in s.words)
        # Counter keeps first-seen order among equal counts
        ranked = sorted(counts.items(), key=lambda kv: -kv[1])
        return cls([w for w, _ in ranked[:cap]])

    def __len__(self):
        return len(self.itos)

    def index(self, word: str) -> int:
        return self.stoi.get(word, 0)


@dataclass
class SentenceFeatures:
    word_ids: np.ndarray
    char_ids: np.ndarray
    fw_pos: np.ndarray
    bw_pos: np.ndarray
    lm_ids: np.ndarray
    lex_rows: Optional[np.ndarray] = None
    lex_ids: Optional[np.ndarray] = None
    lex_weights: Optional[np.ndarray] = None
    flags: Optional[np.ndarray] = None
    tags: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.word_ids)


class Featurizer:
    """Holds vocabularies and lexicon artifacts; maps a sentence to arrays."""

    def __init__(self, vocab: Vocab, chars: CharVocab, lm_vocab: LmVocab, scheme: TagScheme,
                 mode: str = "none", lexicon: Optional[Lexicon] = None,
                 stats: Optional[LexiconStats] = None):
        if mode not in LEXICON_MODES:
            raise ValueError(f"lexicon_mode must be one of {LEXICON_MODES}, got {mode!r}")
        if mode != "none" and lexicon is None:
            raise ValueError(f"lexicon_mode {mode!r} needs a lexicon")
        if mode == "softlexicon" and stats is None:
            raise ValueError("softlexicon mode needs lexicon statistics")
        self.vocab = vocab
        self.chars = chars
        self.lm_vocab = lm_vocab
        self.scheme = scheme
        self.mode = mode
        self.lexicon = lexicon
        self.stats = stats
        self.phrase_index = {NONE: 0}
        if lexicon is not None:
            self.phrase_index.update((p, i + 1) for i, p in enumerate(lexicon.phrases))

    def __call__(self, sentence: Sentence, with_tags: bool = True) -> SentenceFeatures:
        words = sentence.words
        bound = self.chars.index(BOUNDARY)
        stream = [bound]
        fw_pos, bw_pos = [], []
        for w in words:
            bw_pos.append(len(stream) - 1)
            stream.extend(self.chars.index(ch) for ch in w)
            stream.append(bound)
            fw_pos.append(len(stream) - 1)
        feats = SentenceFeatures(
            word_ids=np.array([self.vocab.index(w) for w in words], dtype=np.int64),
            char_ids=np.array(stream, dtype=np.int64),
            fw_pos=np.array(fw_pos, dtype=np.int64),
            bw_pos=np.array(bw_pos, dtype=np.int64),
            lm_ids=np.array([self.lm_vocab.index(w) for w in words], dtype=np.int64),
        )
        if self.mode != "none":
            sets = match_bmes(words, self.lexicon)
            if self.mode == "exsoftword":
                feats.flags = np.array([flags_from_sets(s) for s in sets], dtype=np.float64)
            else:
                rows, ids, weights = [], [], []
                for t, token_sets in enumerate(sets):
                    for block, phrase, weight in set_weights(token_sets, self.stats):
                        rows.append(4 * t + block)
                        ids.append(self.phrase_index[phrase])
                        weights.append(weight)
                feats.lex_rows = np.array(rows, dtype=np.int64)
                feats.lex_ids = np.array(ids, dtype=np.int64)
                feats.lex_weights = np.array(weights, dtype=np.float64)
        if with_tags and sentence.is_tagged:
            feats.tags = np.array(self.scheme.encode(sentence.tags), dtype=np.int64)
        return feats
