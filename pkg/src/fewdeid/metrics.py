"""Entity-level evaluation and inter-annotator agreement.

Scoring is exact span match: a predicted entity counts only when type,
start, and end all equal a gold entity. Cohen's kappa is computed over
pooled token labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Corpus, Sentence
from .labels import DEFAULT_LABEL_SET, LabelSet


class AlignmentError(ValueError):
    """Gold and predicted corpora do not line up."""


@dataclass(frozen=True)
class Span:
    phi_type: str
    start_word: int
    end_word: int  # inclusive
    sentence: int = 0

    def __post_init__(self):
        if self.start_word > self.end_word:
            raise ValueError("span start must be <= end")


@dataclass
class LabelMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def predicted(self) -> int:
        return self.tp + self.fp


@dataclass
class MetricsReport:
    micro: LabelMetrics
    per_label: dict[str, LabelMetrics] = field(default_factory=dict)

    def as_dict(self) -> dict:
        def row(m: LabelMetrics) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
                "predicted": m.predicted,
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
            }

        return {"micro": row(self.micro), "per_label": {k: row(v) for k, v in self.per_label.items()}}


def repair_bio(labels: list[int], label_set: LabelSet = DEFAULT_LABEL_SET) -> list[int]:
    """Make a label sequence valid IOB2: I-X after O, or after a different
    type, becomes B-X. Idempotent; valid sequences pass through unchanged."""
    out = list(labels)
    prev_type: str | None = None
    for i, lid in enumerate(out):
        t = label_set.entity_type(lid)
        if t is None:
            prev_type = None
            continue
        if not label_set.is_begin(lid) and t != prev_type:
            out[i] = label_set.begin_id(t)
        prev_type = t
    return out


def extract_spans(labels: list[int], label_set: LabelSet = DEFAULT_LABEL_SET, sentence: int = 0) -> list[Span]:
    """Maximal B-X (I-X)* runs of a valid IOB2 sequence become spans."""
    spans: list[Span] = []
    start: int | None = None
    cur_type: str | None = None
    for i, lid in enumerate(labels):
        t = label_set.entity_type(lid)
        begins = label_set.is_begin(lid)
        if cur_type is not None and (t is None or begins or t != cur_type):
            spans.append(Span(cur_type, start, i - 1, sentence))
            start, cur_type = None, None
        if t is not None and (begins or cur_type is None):
            start, cur_type = i, t
    if cur_type is not None:
        spans.append(Span(cur_type, start, len(labels) - 1, sentence))
    return spans


def _check_aligned(gold: Corpus, pred: Corpus):
    if len(gold) != len(pred):
        raise AlignmentError(f"sentence count mismatch: gold {len(gold)} vs pred {len(pred)}")
    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {i}: word count mismatch ({len(g)} vs {len(p)})")


def evaluate(gold: Corpus, pred: Corpus) -> MetricsReport:
    """Micro-averaged exact-match entity scoring, with per-label rows.

    Precision is 0 (not NaN) when there are no predictions.
    """
    _check_aligned(gold, pred)
    label_set = gold.label_set
    micro = LabelMetrics()
    per_label: dict[str, LabelMetrics] = {}

    def bucket(t: str) -> LabelMetrics:
        if t not in per_label:
            per_label[t] = LabelMetrics()
        return per_label[t]

    for i, (g, p) in enumerate(zip(gold.sentences, pred.sentences)):
        gold_spans = set(extract_spans(repair_bio(g.label_ids, label_set), label_set, i))
        pred_spans = set(extract_spans(repair_bio(p.label_ids, label_set), label_set, i))
        for s in gold_spans & pred_spans:
            micro.tp += 1
            bucket(s.phi_type).tp += 1
        for s in pred_spans - gold_spans:
            micro.fp += 1
            bucket(s.phi_type).fp += 1
        for s in gold_spans - pred_spans:
            micro.fn += 1
            bucket(s.phi_type).fn += 1

    ordered = {t: per_label[t] for t in label_set.phi_types if t in per_label}
    return MetricsReport(micro, ordered)


def per_label_report(gold: Corpus, pred: Corpus) -> dict[str, LabelMetrics]:
    """Per-PHI-type rows of evaluate; types absent from both sides are omitted."""
    return evaluate(gold, pred).per_label


def cohens_kappa(a: list[int], b: list[int]) -> float:
    """Chance-corrected token agreement (p_o - p_e) / (1 - p_e).

    p_e comes from the two annotators' marginal label frequencies. When
    p_e == 1 exactly (both marginals degenerate on one label), kappa is 1
    if observed agreement is also perfect.
    """
    if len(a) != len(b):
        raise AlignmentError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise AlignmentError("empty label sequences")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    freq_a: dict[int, int] = {}
    freq_b: dict[int, int] = {}
    for x in a:
        freq_a[x] = freq_a.get(x, 0) + 1
    for y in b:
        freq_b[y] = freq_b.get(y, 0) + 1
    p_e = sum(freq_a[k] * freq_b.get(k, 0) for k in freq_a) / (n * n)
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise ValueError("degenerate marginals (p_e == 1) with imperfect agreement")
    return (p_o - p_e) / (1.0 - p_e)


def corpus_kappa(a: Corpus, b: Corpus, exclude_o: bool = False) -> float:
    """Token-level kappa pooled over sentence-aligned corpora.

    With exclude_o, positions labeled O by both annotators are dropped.
    """
    _check_aligned(a, b)
    xs: list[int] = []
    ys: list[int] = []
    for sa, sb in zip(a.sentences, b.sentences):
        for la, lb in zip(sa.label_ids, sb.label_ids):
            if exclude_o and la == 0 and lb == 0:
                continue
            xs.append(la)
            ys.append(lb)
    return cohens_kappa(xs, ys)


def partition_agreement(a: Corpus, b: Corpus) -> tuple[Corpus, list[tuple[Sentence, Sentence]]]:
    """Split commonly annotated sentences into agreed vs disagreed.

    A sentence agrees iff every token label matches. Requires the two
    corpora to contain the same sentences (same words, same order).
    """
    if len(a) != len(b):
        raise AlignmentError(f"sentence count mismatch: {len(a)} vs {len(b)}")
    mismatched = [
        i for i, (sa, sb) in enumerate(zip(a.sentences, b.sentences)) if sa.words != sb.words
    ]
    if mismatched:
        raise AlignmentError(f"sentence texts differ at indices {mismatched}")
    agreed: list[Sentence] = []
    disagreed: list[tuple[Sentence, Sentence]] = []
    for sa, sb in zip(a.sentences, b.sentences):
        if sa.label_ids == sb.label_ids:
            agreed.append(sa)
        else:
            disagreed.append((sa, sb))
    return Corpus(agreed, a.label_set, name="agreed"), disagreed
