"""Entity-level precision / recall / F1 with conlleval semantics."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

from lexner.corpus import Dataset, Sentence, TagScheme, extract_spans, validate_bio
from lexner.errors import CorpusError

EVAL_BATCH = 32


@dataclass(frozen=True)
class LabelScore:
    gold: int
    pred: int
    correct: int

    @property
    def precision(self) -> float:
        return 100.0 * self.correct / self.pred if self.pred else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    per_label: dict[str, LabelScore]
    overall: LabelScore = field(init=False)

    def __post_init__(self):
        scores = self.per_label.values()
        object.__setattr__(self, "overall", LabelScore(
            sum(s.gold for s in scores), sum(s.pred for s in scores), sum(s.correct for s in scores)))

    @property
    def f1(self) -> float:
        return self.overall.f1

    def rows(self):
        for label, s in self.per_label.items():
            yield label, s
        yield "OVERALL", self.overall

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("label,precision,recall,f1,gold,pred,correct\n")
        for label, s in self.rows():
            out.write(f"{label},{s.precision:.2f},{s.recall:.2f},{s.f1:.2f},{s.gold},{s.pred},{s.correct}\n")
        return out.getvalue()

    def to_table(self) -> str:
        head = f"{'label':<8} {'prec':>7} {'rec':>7} {'f1':>7} {'gold':>6} {'pred':>6} {'corr':>6}"
        lines = [head, "-" * len(head)]
        for label, s in self.rows():
            lines.append(f"{label:<8} {s.precision:7.2f} {s.recall:7.2f} {s.f1:7.2f} "
                         f"{s.gold:6d} {s.pred:6d} {s.correct:6d}")
        return "\n".join(lines) + "\n"


def entity_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]],
              scheme: TagScheme) -> EvalReport:
    """Exact-match entity scores. Predictions are BIO-repaired first; gold must be valid."""
    if len(gold) != len(pred):
        raise CorpusError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    counts = {label: [0, 0, 0] for label in scheme.labels}
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise CorpusError(f"sentence {k}: {len(g)} gold tags but {len(p)} predicted")
        p, _ = validate_bio(p, scheme, repair=True)
        gold_spans = set(extract_spans(g))
        pred_spans = set(extract_spans(p))
        for span in gold_spans:
            counts[span.label][0] += 1
        for span in pred_spans:
            counts[span.label][1] += 1
        for span in gold_spans & pred_spans:
            counts[span.label][2] += 1
    return EvalReport({label: LabelScore(*c) for label, c in counts.items()})


def predict_tags(model, featurizer, sentences: Sequence[Sentence], batch_size: int = EVAL_BATCH) -> list[list[str]]:
    """Viterbi tag strings for each sentence, decoded in fixed-size batches."""
    feats = [featurizer(s, with_tags=False) for s in sentences]
    out = []
    for i in range(0, len(feats), batch_size):
        for path in model.decode(feats[i:i + batch_size]):
            out.append(featurizer.scheme.decode(path.tags))
    return out


def evaluate_model(checkpoint, dataset: Dataset, lexicon=None, stats=None) -> EvalReport:
    """Decode ``dataset`` with a checkpoint and score against its gold tags.

    Lexicon artifacts default to those stored in the checkpoint.
    """
    if not len(dataset):
        raise CorpusError("cannot evaluate on an empty dataset")
    if dataset.scheme != checkpoint.scheme:
        raise CorpusError(f"dataset scheme {dataset.scheme} does not match checkpoint {checkpoint.scheme}")
    featurizer = checkpoint.featurizer()
    if lexicon is not None:
        if checkpoint.lexicon is None or lexicon.phrases != checkpoint.lexicon.phrases:
            raise CorpusError("lexicon does not match the phrases the checkpoint was trained with")
        featurizer.lexicon = lexicon
    if stats is not None:
        featurizer.stats = stats
    pred = predict_tags(checkpoint.model, featurizer, dataset.sentences)
    return entity_f1([s.tags for s in dataset.sentences], pred, dataset.scheme)
