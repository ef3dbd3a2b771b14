"""Labeled corpora: CoNLL parsing/writing and few-shot sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

from .labels import DEFAULT_LABEL_SET, LabelError, LabelSet
from .seeding import rng_from


class CorpusFormatError(ValueError):
    """Malformed CoNLL input."""


class CoverageError(ValueError):
    """A few-shot sample cannot cover every PHI type."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"corpus has no sentence containing: {', '.join(missing)}")


@dataclass(frozen=True)
class Token:
    text: str
    label: int  # BIO label id

    def __post_init__(self):
        if not self.text or any(c.isspace() for c in self.text):
            raise CorpusFormatError(f"token text must be non-empty, no whitespace: {self.text!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    doc_id: str | None = None
    sent_index: int | None = None

    def __post_init__(self):
        if not self.tokens:
            raise CorpusFormatError("sentence must contain at least one token")
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def label_ids(self) -> list[int]:
        return [t.label for t in self.tokens]

    def with_labels(self, label_ids: list[int]) -> "Sentence":
        if len(label_ids) != len(self.tokens):
            raise ValueError("label count does not match token count")
        return Sentence(
            tuple(Token(t.text, l) for t, l in zip(self.tokens, label_ids)),
            doc_id=self.doc_id,
            sent_index=self.sent_index,
        )

    def entity_types(self, label_set: LabelSet) -> set[str]:
        return {t for l in self.label_ids if (t := label_set.entity_type(l)) is not None}


@dataclass
class Corpus:
    sentences: list[Sentence]
    label_set: LabelSet = field(default_factory=lambda: DEFAULT_LABEL_SET)
    name: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.sentences == other.sentences
            and self.label_set == other.label_set
        )


@dataclass(frozen=True)
class FewShotSpec:
    """K sentences, sampled so that every PHI type occurs at least once."""

    k: int
    seed: int = 0
    require_all_labels: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def parse_conll(text: str, label_set: LabelSet = DEFAULT_LABEL_SET, name: str = "") -> Corpus:
    """Parse token<TAB>label lines with blank-line sentence separators.

    Labels are stored verbatim (no IOB2 repair) so that write_conll
    round-trips byte-identically modulo a trailing newline.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line == "":
            if tokens:
                sentences.append(Sentence(tuple(tokens), sent_index=len(sentences)))
                tokens = []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(
                f"line {lineno}: expected 'token<TAB>label', got {len(parts)} column(s)"
            )
        word, label = parts
        if not word or word != word.strip():
            raise CorpusFormatError(f"line {lineno}: bad token text {word!r}")
        try:
            label_id = label_set.label_id(label)
        except LabelError as e:
            raise LabelError(f"line {lineno}: {e}") from None
        tokens.append(Token(word, label_id))
    if tokens:
        sentences.append(Sentence(tuple(tokens), sent_index=len(sentences)))
    return Corpus(sentences, label_set, name=name)


def write_conll(corpus: Corpus) -> str:
    """Inverse of parse_conll: one token<TAB>label per line, blank line after each sentence."""
    chunks = []
    for sent in corpus.sentences:
        for tok in sent.tokens:
            chunks.append(f"{tok.text}\t{corpus.label_set.label_name(tok.label)}\n")
        chunks.append("\n")
    return "".join(chunks)


def sample_fewshot(corpus: Corpus, spec: FewShotSpec) -> Corpus:
    """Sample exactly K sentences without replacement, covering every PHI type.

    Greedy: one random sentence per uncovered type, rarest type first, then
    uniform fill. Deterministic given spec.seed.
    """
    if spec.k > len(corpus):
        raise ValueError(f"k={spec.k} exceeds corpus size {len(corpus)}")
    if spec.require_all_labels and spec.k < len(corpus.label_set.phi_types):
        raise ValueError(
            f"k={spec.k} cannot cover {len(corpus.label_set.phi_types)} PHI types"
        )

    rng = rng_from(spec.seed, "fewshot")
    picked: list[int] = []
    picked_set: set[int] = set()

    if spec.require_all_labels:
        by_type: dict[str, list[int]] = {t: [] for t in corpus.label_set.phi_types}
        for i, sent in enumerate(corpus.sentences):
            for t in sent.entity_types(corpus.label_set):
                by_type[t].append(i)
        missing = [t for t, idxs in by_type.items() if not idxs]
        if missing:
            raise CoverageError(missing)
        covered: set[str] = set()
        # rarest first, so scarce types are not crowded out
        for phi_type in sorted(by_type, key=lambda t: (len(by_type[t]), t)):
            if phi_type in covered:
                continue
            # uncovered implies no picked sentence contains it
            candidates = [i for i in by_type[phi_type] if i not in picked_set]
            idx = int(rng.choice(candidates))
            picked.append(idx)
            picked_set.add(idx)
            covered.update(corpus.sentences[idx].entity_types(corpus.label_set))

    remaining = [i for i in range(len(corpus)) if i not in picked_set]
    fill = spec.k - len(picked)
    if fill > 0:
        extra = rng.choice(len(remaining), size=fill, replace=False)
        picked.extend(remaining[int(j)] for j in extra)

    picked.sort()
    return Corpus(
        [corpus.sentences[i] for i in picked],
        corpus.label_set,
        name=f"{corpus.name}-fewshot{spec.k}" if corpus.name else f"fewshot{spec.k}",
    )
