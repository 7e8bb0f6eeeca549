"""Pretrained vectors, vocabularies and phrase embedding initialisation."""

from __future__ import annotations

import io
import logging
from typing import Iterable, Optional, Sequence

import numpy as np

from lexner.corpus import Sentence
from lexner.errors import CorpusError
from lexner.lexicon import NONE, Lexicon

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
BOUNDARY = "<w>"


class EmbeddingTable:
    """Row-per-key matrix with exact, then lowercase, then ``<unk>`` lookup."""

    def __init__(self, keys: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(keys):
            raise ValueError(f"{len(keys)} keys for matrix of shape {vectors.shape}")
        self.keys = list(keys)
        self.vectors = vectors
        self._index: dict[str, int] = {}
        for i, k in enumerate(self.keys):
            self._index.setdefault(k, i)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self._index

    def find(self, key: str) -> Optional[int]:
        i = self._index.get(key)
        if i is None:
            i = self._index.get(key.lower())
        return i

    def __getitem__(self, key: str) -> np.ndarray:
        i = self.find(key)
        if i is None:
            i = self._index.get(UNK)
            if i is None:
                raise KeyError(key)
        return self.vectors[i]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: self.vectors[i] for k, i in self._index.items()}


def load_pretrained(stream, expected_dim: int) -> EmbeddingTable:
    """Read ``<word> <v1> ... <vD>`` lines. Duplicate words keep the first row."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    keys, rows, seen = [], [], set()
    for lineno, line in enumerate(stream, start=1):
        parts = line.rstrip("\r\n").split(" ")
        if not parts or not parts[0]:
            continue
        word, values = parts[0], [v for v in parts[1:] if v]
        if len(values) != expected_dim:
            raise CorpusError(f"expected {expected_dim} values, got {len(values)}", line=lineno)
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise CorpusError(f"unparsable number: {exc}", line=lineno) from None
        if word in seen:
            continue
        seen.add(word)
        keys.append(word)
        rows.append(vec)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), expected_dim)
    logger.info("loaded %d pretrained vectors of dim %d", len(keys), expected_dim)
    return EmbeddingTable(keys, matrix)


class Vocab:
    """Word index with ``<pad>`` = 0 and ``<unk>`` = 1."""

    def __init__(self, words: Iterable[str] = ()):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: 0, UNK: 1}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def index(self, word: str) -> int:
        i = self.stoi.get(word)
        if i is None:
            i = self.stoi.get(word.lower(), 1)
        return i


class CharVocab(Vocab):
    """Character index: ``<pad>`` = 0, ``<unk>`` = 1, word boundary = 2."""

    def __init__(self, chars: Iterable[str] = ()):
        super().__init__()
        self.add(BOUNDARY)
        for ch in chars:
            self.add(ch)

    def index(self, ch: str) -> int:
        return self.stoi.get(ch, 1)

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> "CharVocab":
        return cls(ch for s in sentences for w in s.words for ch in w)


def uniform_init(rng: np.random.Generator, shape, dim: int) -> np.ndarray:
    bound = np.sqrt(3.0 / dim)
    return rng.uniform(-bound, bound, size=shape)


def build_vocab(dataset: Iterable[Sentence], pretrained: Optional[EmbeddingTable], seed: int,
                dim: int = 100, other_splits: Iterable[Iterable[Sentence]] = ()):
    """Training words plus pretrained-covered words of other splits.

    Returns ``(Vocab, EmbeddingTable)``; the table is the trainable word matrix.
    Words with a pretrained vector copy it, the rest (and ``<unk>``) draw from
    U(-sqrt(3/dim), sqrt(3/dim)). ``<pad>`` is zero.
    """
    if pretrained is not None:
        dim = pretrained.dim
    vocab = Vocab(w for s in dataset for w in s.words)
    if pretrained is not None:
        for split in other_splits:
            for s in split:
                for w in s.words:
                    if w not in vocab and pretrained.find(w) is not None:
                        vocab.add(w)
    rng = np.random.default_rng(seed)
    matrix = uniform_init(rng, (len(vocab), dim), dim)
    matrix[0] = 0.0
    copied = 0
    if pretrained is not None:
        for i, w in enumerate(vocab.itos[2:], start=2):
            j = pretrained.find(w)
            if j is not None:
                matrix[i] = pretrained.vectors[j]
                copied += 1
    logger.info("vocab: %d words, %d with pretrained vectors", len(vocab), copied)
    return vocab, EmbeddingTable(vocab.itos, matrix)


def init_phrase_embeddings(lexicon: Lexicon, word_table: EmbeddingTable, phrase_dim: int,
                           seed: int) -> EmbeddingTable:
    """``NONE`` first, then one row per phrase: mean constituent word vector, truncated."""
    if phrase_dim > word_table.dim:
        raise ValueError(f"phrase_dim {phrase_dim} exceeds word dim {word_table.dim}")
    rng = np.random.default_rng(seed)
    rows = [uniform_init(rng, phrase_dim, phrase_dim)]
    for phrase in lexicon.phrases:
        vecs = [word_table[w][:phrase_dim] for w in phrase.split(" ")]
        rows.append(np.mean(vecs, axis=0))
    return EmbeddingTable([NONE] + list(lexicon.phrases), np.stack(rows))
