"""Domain dictionary matching and frequency-weighted BMES set features."""

from __future__ import annotations

import hashlib
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from lexner.corpus import Sentence
from lexner.errors import CorpusError

NONE = "NONE"
"""Sentinel filling an empty word set. Phrases are lowercased, so it never collides."""

BLOCKS = ("B", "M", "E", "S")


class _Node:
    __slots__ = ("children", "phrase")

    def __init__(self):
        self.children: dict[str, _Node] = {}
        self.phrase: str | None = None


class Lexicon:
    """Set of lowercase token-sequence phrases indexed by a token trie."""

    def __init__(self, phrases: Iterable[Sequence[str]]):
        self._root = _Node()
        self.phrases: list[str] = []
        self.max_len = 0
        for toks in phrases:
            toks = [t.lower() for t in toks]
            if not toks or any(not t or t.isspace() for t in toks):
                raise CorpusError(f"invalid phrase {toks!r}")
            node = self._root
            for tok in toks:
                node = node.children.setdefault(tok, _Node())
            if node.phrase is None:
                node.phrase = " ".join(toks)
                self.phrases.append(node.phrase)
                self.max_len = max(self.max_len, len(toks))
        if not self.phrases:
            raise CorpusError("empty lexicon")
        self._phrase_set = frozenset(self.phrases)

    def __len__(self):
        return len(self.phrases)

    def __contains__(self, phrase):
        return phrase in self._phrase_set

    def occurrences(self, words: Sequence[str]) -> list[tuple[int, int, str]]:
        """All ``(start, end, phrase)`` matches, sorted by start then end."""
        keys = [w.lower() for w in words]
        found = []
        for i in range(len(keys)):
            node = self._root
            for j in range(i, len(keys)):
                node = node.children.get(keys[j])
                if node is None:
                    break
                if node.phrase is not None:
                    found.append((i, j + 1, node.phrase))
        return found


def load_lexicon(stream) -> Lexicon:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    phrases = []
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        phrases.append(line.split())
    return Lexicon(phrases)


@dataclass(frozen=True)
class BMESWordSets:
    b_set: tuple[str, ...]
    m_set: tuple[str, ...]
    e_set: tuple[str, ...]
    s_set: tuple[str, ...]

    def blocks(self) -> tuple[tuple[str, ...], ...]:
        return (self.b_set, self.m_set, self.e_set, self.s_set)


def _seal(items: list[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items)) or (NONE,)


def match_bmes(sentence: Sentence | Sequence[str], lexicon: Lexicon) -> list[BMESWordSets]:
    """Distribute every dictionary match to the B/M/E/S set of its tokens.

    Overlapping matches are all kept. Within a set, phrases are ordered by
    the position of the occurrence that put them there.
    """
    words = sentence.words if isinstance(sentence, Sentence) else list(sentence)
    sets = [([], [], [], []) for _ in words]
    for start, end, phrase in lexicon.occurrences(words):
        if end - start == 1:
            sets[start][3].append(phrase)
            continue
        sets[start][0].append(phrase)
        for k in range(start + 1, end - 1):
            sets[k][1].append(phrase)
        sets[end - 1][2].append(phrase)
    return [BMESWordSets(*(_seal(s) for s in token_sets)) for token_sets in sets]


def count_frequencies(statistics_corpus: Iterable[Sentence], lexicon: Lexicon) -> dict[str, int]:
    """Occurrence counts ``z(w)``, skipping occurrences properly inside another match."""
    z = dict.fromkeys(lexicon.phrases, 0)
    for sent in statistics_corpus:
        words = sent.words if isinstance(sent, Sentence) else sent
        occ = lexicon.occurrences(words)
        for i, j, phrase in occ:
            covered = any(
                a <= i and j <= b and (a, b) != (i, j) for a, b, _ in occ
            )
            if not covered:
                z[phrase] += 1
    return z


def word_type_counts(training: Iterable[Sentence], statistics_corpus: Iterable[Sentence]) -> dict[str, int]:
    """Frequency in the statistics corpus of every lowercased training word type."""
    types = {w.lower() for sent in training for w in sent.words}
    counts = Counter(w.lower() for sent in statistics_corpus for w in sent.words)
    return {w: counts[w] for w in sorted(types)}


def smoothing_constant(training_word_counts: Mapping[str, int], fraction: float = 0.10) -> int:
    """Smallest ``c >= 1`` with at least ``fraction`` of the types seen fewer than ``c`` times."""
    if not training_word_counts:
        raise ValueError("smoothing constant needs at least one word type")
    counts = sorted(training_word_counts.values())
    # k-th smallest count must fall below c; k is the least integer with k/N >= fraction
    need = max(1, math.ceil(fraction * len(counts) - 1e-12))
    return max(1, counts[need - 1] + 1)


@dataclass(frozen=True)
class LexiconStats:
    z: Mapping[str, int]
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"smoothing constant must be >= 1, got {self.c}")
        if any(v < 0 for v in self.z.values()):
            raise ValueError("negative phrase count")

    def weight(self, phrase: str) -> int:
        if phrase == NONE:
            return self.c
        return self.z.get(phrase, 0) + self.c

    def digest(self) -> str:
        blob = json.dumps({"z": dict(sorted(self.z.items())), "c": self.c}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_stats(lexicon: Lexicon, training: Sequence[Sentence], test: Sequence[Sentence] = ()) -> LexiconStats:
    """Statistics over training + test sentences (tags are ignored)."""
    corpus = list(training) + list(test)
    z = count_frequencies(corpus, lexicon)
    c = smoothing_constant(word_type_counts(training, corpus))
    return LexiconStats(z, c)


@dataclass(frozen=True)
class SetVectorConfig:
    phrase_dim: int = 50
    union_mode: str = field(default="multiset", init=False)

    @property
    def output_dim(self) -> int:
        return 4 * self.phrase_dim


def set_weights(sets: BMESWordSets, stats: LexiconStats) -> list[tuple[int, str, float]]:
    """Normalised ``(block, phrase, weight)`` entries; weights sum to 1 over all blocks."""
    entries = [(b, w, stats.weight(w)) for b, block in enumerate(sets.blocks()) for w in block]
    total = float(sum(wt for _, _, wt in entries))
    return [(b, w, wt / total) for b, w, wt in entries]


def set_vector(sets: BMESWordSets, stats: LexiconStats, phrase_embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
    dim = len(phrase_embeddings[NONE])
    out = np.zeros(4 * dim)
    for block, phrase, weight in set_weights(sets, stats):
        out[block * dim:(block + 1) * dim] += weight * np.asarray(phrase_embeddings[phrase], dtype=float)
    return out


def flags_from_sets(sets: BMESWordSets) -> tuple[int, int, int, int, int]:
    bmes = [int(block != (NONE,)) for block in sets.blocks()]
    return (*bmes, int(not any(bmes)))


def exsoftword_flags(sentence, lexicon: Lexicon) -> list[tuple[int, int, int, int, int]]:
    """Five binary flags ``(B, M, E, S, O)`` per token."""
    return [flags_from_sets(s) for s in match_bmes(sentence, lexicon)]


def stats_report(lexicon: Lexicon, stats: LexiconStats, statistics_corpus: Sequence[Sentence], top: int = 10) -> str:
    matched = sum(len(lexicon.occurrences(s.words)) for s in statistics_corpus)
    counted = sum(stats.z.values())
    lines = [
        f"phrases: {len(lexicon)}",
        f"statistics sentences: {len(statistics_corpus)}",
        f"matched occurrences: {matched}",
        f"counted occurrences (not covered): {counted}",
        f"phrases never counted: {sum(1 for v in stats.z.values() if v == 0)}",
        f"smoothing constant c: {stats.c}",
        f"top {top} phrases:",
    ]
    ranked = sorted(stats.z.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    width = max((len(p) for p, _ in ranked), default=0)
    lines += [f"  {p:<{width}}  {n}" for p, n in ranked]
    return "\n".join(lines) + "\n"
