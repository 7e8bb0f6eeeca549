"""Column-format corpora, BIO tag handling and entity spans."""

from __future__ import annotations

import io
import re
import string
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO, Union

from lexner.errors import CorpusError

DEFAULT_LABELS = ("PER", "ORG", "PCT", "OUT", "SER", "TIM")

_LABEL_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")
_TAG_RE = re.compile(r"^(O|[BI]-[A-Z][A-Z0-9_]*)$")
_PUNCT = frozenset(string.punctuation)


@dataclass(frozen=True)
class Token:
    surface: str
    gold_tag: Optional[str] = None

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise CorpusError(f"invalid token surface {self.surface!r}")
        if self.gold_tag is not None and not _TAG_RE.match(self.gold_tag):
            raise CorpusError(f"malformed tag {self.gold_tag!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError("empty sentence")
        tagged = {t.gold_tag is not None for t in self.tokens}
        if len(tagged) > 1:
            raise CorpusError("sentence mixes tagged and untagged tokens")

    @classmethod
    def from_lists(cls, words: Sequence[str], tags: Optional[Sequence[str]] = None) -> "Sentence":
        if tags is None:
            return cls(tuple(Token(w) for w in words))
        if len(tags) != len(words):
            raise CorpusError(f"{len(words)} tokens but {len(tags)} tags")
        return cls(tuple(Token(w, t) for w, t in zip(words, tags)))

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def tags(self) -> Optional[list[str]]:
        if self.tokens[0].gold_tag is None:
            return None
        return [t.gold_tag for t in self.tokens]

    @property
    def is_tagged(self) -> bool:
        return self.tokens[0].gold_tag is not None


class TagScheme:
    """Label set and derived BIO tag indices.

    Index assignment: ``O`` is 0, then for the i-th label (0-based)
    ``B-L`` is ``1 + 2i`` and ``I-L`` is ``2 + 2i``.
    """

    def __init__(self, labels: Iterable[str] = DEFAULT_LABELS):
        labels = tuple(labels)
        if not labels:
            raise CorpusError("tag scheme needs at least one label")
        if len(set(labels)) != len(labels):
            raise CorpusError(f"duplicate labels in {labels}")
        for label in labels:
            if not _LABEL_RE.match(label) or not label.isascii():
                raise CorpusError(f"label {label!r} must be uppercase ASCII")
        self.labels = labels
        self.tags: tuple[str, ...] = ("O",) + tuple(
            f"{p}-{label}" for label in labels for p in ("B", "I")
        )
        self._index = {t: i for i, t in enumerate(self.tags)}

    def __len__(self):
        return len(self.tags)

    def __contains__(self, tag):
        return tag in self._index

    def __eq__(self, other):
        return isinstance(other, TagScheme) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"TagScheme({list(self.labels)})"

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise CorpusError(f"tag {tag!r} not in scheme {list(self.labels)}") from None

    def encode(self, tags: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tags]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tags[i] for i in ids]


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span [{self.start}, {self.end})")


@dataclass(frozen=True)
class Dataset:
    sentences: tuple[Sentence, ...]
    scheme: TagScheme

    def __post_init__(self):
        for k, sent in enumerate(self.sentences):
            for tag in sent.tags or ():
                if tag not in self.scheme:
                    raise CorpusError(f"sentence {k}: tag {tag!r} not in scheme")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def subset(self, sentences: Iterable[Sentence]) -> "Dataset":
        return Dataset(tuple(sentences), self.scheme)


def _lines(stream: Union[str, TextIO, Iterable[str]]) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def read_conll(stream, scheme: TagScheme) -> Dataset:
    """Parse whitespace-separated column text into a :class:`Dataset`.

    Only the first and last columns are used, so 4-column CoNLL-2003 files
    load unchanged. The column count must stay constant within a file.
    """
    sentences = []
    current: list[Token] = []
    ncols = None
    for lineno, raw in enumerate(_lines(stream), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split()
        if ncols is None:
            ncols = len(cols)
        elif len(cols) != ncols:
            if (ncols == 1) != (len(cols) == 1):
                raise CorpusError("mixed tagged and untagged lines", line=lineno)
            raise CorpusError(f"expected {ncols} columns, got {len(cols)}", line=lineno)
        if ncols == 1:
            current.append(Token(cols[0]))
            continue
        tag = cols[-1]
        if tag not in scheme:
            raise CorpusError(f"tag {tag!r} not in scheme", line=lineno)
        current.append(Token(cols[0], tag))
    if current:
        sentences.append(Sentence(tuple(current)))
    return Dataset(tuple(sentences), scheme)


def write_conll(dataset: Dataset) -> str:
    out = []
    for sent in dataset.sentences:
        for tok in sent.tokens:
            out.append(tok.surface if tok.gold_tag is None else f"{tok.surface} {tok.gold_tag}")
        out.append("")
    return "".join(line + "\n" for line in out)


def _split_tag(tag: str) -> tuple[str, Optional[str]]:
    if tag == "O":
        return "O", None
    prefix, label = tag.split("-", 1)
    return prefix, label


def validate_bio(tags: Sequence[str], scheme: TagScheme, repair: bool = False):
    """Find ``I-X`` tags that do not continue an ``X`` entity.

    Returns ``(tags, violations)``. With ``repair`` each violating ``I-X``
    becomes ``B-X`` (conlleval reading); otherwise tags come back unchanged.
    """
    for tag in tags:
        scheme.index(tag)
    out = list(tags)
    violations = []
    prev_label = None
    for i, tag in enumerate(tags):
        prefix, label = _split_tag(tag)
        if prefix == "I" and prev_label != label:
            violations.append(i)
            if repair:
                out[i] = f"B-{label}"
        prev_label = label
    return out, violations


def extract_spans(tags: Sequence[str]) -> list[EntitySpan]:
    spans = []
    start = label = None
    for i, tag in enumerate(tags):
        prefix, lab = _split_tag(tag)
        if prefix == "I":
            if label != lab:
                raise CorpusError(f"invalid BIO: {tag} at position {i} does not continue an entity")
            continue
        if label is not None:
            spans.append(EntitySpan(start, i, label))
        start, label = (i, lab) if prefix == "B" else (None, None)
    if label is not None:
        spans.append(EntitySpan(start, len(tags), label))
    return spans


def spans_to_tags(spans: Iterable[EntitySpan], length: int) -> list[str]:
    tags = ["O"] * length
    for span in spans:
        if span.end > length:
            raise ValueError(f"span {span} exceeds length {length}")
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def _split_edges(chunk: str) -> list[str]:
    lead, trail = [], []
    i, j = 0, len(chunk)
    while i < j and chunk[i] in _PUNCT:
        lead.append(chunk[i])
        i += 1
    while j > i and chunk[j - 1] in _PUNCT:
        trail.append(chunk[j - 1])
        j -= 1
    core = [chunk[i:j]] if i < j else []
    return lead + core + trail[::-1]


def tokenize_raw(text: str) -> Sentence:
    tokens = [piece for chunk in text.split() for piece in _split_edges(chunk)]
    if not tokens:
        raise CorpusError("empty sentence")
    return Sentence.from_lists(tokens)
