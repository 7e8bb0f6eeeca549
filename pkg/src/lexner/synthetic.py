"""Template-generated corpora with a gazetteer, for desk-scale experiments.

Entities are multi-word dictionary phrases: one to three modifier words and a
label-specific head word. The same modifier words also occur as plain context
right before an entity, so where an entity starts is ambiguous from the words
alone. Part of the gazetteer never appears in training sentences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from lexner.corpus import DEFAULT_LABELS, Dataset, Sentence, TagScheme, write_conll

HEADS = {
    "PER": ["rogers", "araos", "shepard", "kovac", "lindqvist", "okafor"],
    "ORG": ["agency", "command", "corporation", "institute", "laboratory", "directorate"],
    "PCT": ["rocket", "satellite", "engine", "radar", "launcher", "drone"],
    "OUT": ["patent", "prototype", "standard", "breakthrough", "certification", "milestone"],
    "SER": ["maintenance", "logistics", "telemetry", "consulting", "refueling", "tracking"],
    "TIM": ["quarter", "season", "fiscal", "decade", "window", "cycle"],
}

MODIFIERS = [
    "advanced", "orbital", "solid", "national", "joint", "heavy", "falcon", "iridium",
    "strategic", "global", "marine", "tactical", "digital", "coastal", "northern", "modular",
    "autonomous", "hypersonic", "civil", "regional", "atlas", "delta", "vega", "polar",
    "integrated", "secure", "rapid", "lunar", "deep", "federal", "allied", "compact",
]

OPENERS = [
    ["officials", "said"], ["the", "report", "noted"], ["according", "to", "sources", ","],
    ["analysts", "expect"], ["last", "week", ","], ["in", "a", "statement", ","],
    ["reporters", "learned", "that"], ["the", "ministry", "confirmed"], ["sources", "describe"],
]
MIDDLES = [
    ["will", "cooperate", "with"], ["was", "compared", "with"], ["replaced"], ["is", "linked", "to"],
    ["supported"], ["depends", "on"], ["and"], ["was", "followed", "by"],
]
CLOSERS = [["this", "year", "."], ["in", "the", "test", "."], ["after", "the", "review", "."], ["."],
           ["again", "."], ["on", "schedule", "."]]
DISTRACTORS = [["the", "{head}", "was", "mentioned", "."], ["a", "{head}", "remains", "idle", "."]]


@dataclass
class SyntheticCorpus:
    train: Dataset
    dev: Dataset
    test: Dataset
    phrases: list[str]

    def lexicon_text(self) -> str:
        return "# synthetic gazetteer\n" + "".join(p + "\n" for p in self.phrases)

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("train", "dev", "test"):
            (d / f"{name}.conll").write_text(write_conll(getattr(self, name)), encoding="utf-8")
        (d / "lexicon.txt").write_text(self.lexicon_text(), encoding="utf-8")


def _gazetteer(rng: np.random.Generator, n_phrases: int) -> list[tuple[str, tuple[str, ...]]]:
    labels = list(HEADS)
    chosen: list[tuple[str, tuple[str, ...]]] = []
    seen: set[tuple[str, ...]] = set()
    while len(chosen) < n_phrases:
        label = labels[len(chosen) % len(labels)]
        n_mod = int(rng.integers(1, 4))
        mods = tuple(rng.choice(MODIFIERS, size=n_mod, replace=False))
        toks = mods + (str(rng.choice(HEADS[label])),)
        # no phrase may be a suffix of another: boundaries stay unambiguous given the gazetteer
        if any(toks[-len(o):] == o or o[-len(toks):] == toks for o in seen):
            continue
        seen.add(toks)
        chosen.append((label, toks))
    return chosen


def _sentence(rng, entities) -> Sentence:
    words, tags = [], []

    def add(tokens, tag="O"):
        words.extend(tokens)
        tags.extend([tag] * len(tokens))

    def add_entity(label, toks):
        mods = [str(m) for m in rng.choice(MODIFIERS, size=int(rng.integers(0, 3)), replace=False)]
        add(mods)
        words.extend(toks)
        tags.extend([f"B-{label}"] + [f"I-{label}"] * (len(toks) - 1))

    add(OPENERS[rng.integers(len(OPENERS))])
    add_entity(*entities[0])
    if len(entities) > 1:
        add(MIDDLES[rng.integers(len(MIDDLES))])
        add_entity(*entities[1])
    add(CLOSERS[rng.integers(len(CLOSERS))])
    if rng.random() < 0.3:
        label = str(rng.choice(list(HEADS)))
        head = str(rng.choice(HEADS[label]))
        add([w.format(head=head) for w in DISTRACTORS[rng.integers(len(DISTRACTORS))]])
    return Sentence.from_lists(words, tags)


def generate(seed: int = 0, n_train: int = 500, n_dev: int = 100, n_test: int = 200,
             n_phrases: int = 200, unseen_fraction: float = 0.25) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    gaz = _gazetteer(rng, n_phrases)
    n_unseen = int(round(unseen_fraction * n_phrases))
    seen, unseen = gaz[n_unseen:], gaz[:n_unseen]

    def make(n, pool_seen_only):
        out = []
        for _ in range(n):
            k = 1 if rng.random() < 0.4 else 2
            pool = seen if pool_seen_only or rng.random() < 0.5 else unseen
            picks = [pool[int(rng.integers(len(pool)))] for _ in range(k)]
            out.append(_sentence(rng, picks))
        return out

    scheme = TagScheme(DEFAULT_LABELS)
    train = Dataset(tuple(make(n_train, True)), scheme)
    dev = Dataset(tuple(make(n_dev, False)), scheme)
    test = Dataset(tuple(make(n_test, False)), scheme)
    return SyntheticCorpus(train, dev, test, [" ".join(t) for _, t in gaz])
