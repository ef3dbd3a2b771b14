"""Standoff XML documents and their projection onto word-level BIO labels.

Annotations are character spans with fine-grained type names; conversion
normalizes them to the coarse PHI set and projects them onto the word
tokenization, one B- per (sentence-clipped) span.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Callable

from .corpus import Sentence, Token
from .labels import DEFAULT_LABEL_SET, LabelSet, normalize_labels
from .textseg import split_sentence_spans, tokenize_words


class StandoffError(ValueError):
    """Malformed or inconsistent standoff annotations."""


@dataclass(frozen=True)
class StandoffDocument:
    raw_text: str
    annotations: tuple[tuple[int, int, str], ...]  # (start_char, end_char, fine_label)
    doc_id: str | None = None

    def __post_init__(self):
        for start, end, label in self.annotations:
            if not (0 <= start < end <= len(self.raw_text)):
                raise StandoffError(
                    f"span ({start}, {end}) out of bounds for text of length {len(self.raw_text)}"
                )


def parse_standoff_xml(xml_text: str) -> StandoffDocument:
    """Parse the documented schema:

    <document id="...">
      <text>raw note text</text>
      <annotations>
        <annotation start="9" end="18" type="FECHAS"/>
      </annotations>
    </document>
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as e:
        raise StandoffError(f"invalid XML: {e}") from None
    if root.tag != "document":
        raise StandoffError(f"expected <document> root, got <{root.tag}>")
    text_el = root.find("text")
    if text_el is None:
        raise StandoffError("missing <text> element")
    raw_text = text_el.text or ""
    annotations = []
    for ann in root.iter("annotation"):
        try:
            start = int(ann.attrib["start"])
            end = int(ann.attrib["end"])
            label = ann.attrib["type"]
        except KeyError as e:
            raise StandoffError(f"annotation missing attribute {e}") from None
        annotations.append((start, end, label))
    return StandoffDocument(raw_text, tuple(annotations), doc_id=root.attrib.get("id"))


def write_standoff_xml(doc: StandoffDocument) -> str:
    root = ET.Element("document")
    if doc.doc_id:
        root.set("id", doc.doc_id)
    ET.SubElement(root, "text").text = doc.raw_text
    anns = ET.SubElement(root, "annotations")
    for start, end, label in doc.annotations:
        ET.SubElement(anns, "annotation", start=str(start), end=str(end), type=label)
    return ET.tostring(root, encoding="unicode")


def convert_standoff_xml(
    doc: StandoffDocument,
    sentence_splitter: Callable[[str], list[tuple[int, int]]] = split_sentence_spans,
    word_tokenizer: Callable[[str], list[tuple[str, int, int]]] = tokenize_words,
    label_set: LabelSet = DEFAULT_LABEL_SET,
) -> list[Sentence]:
    """Project character-level annotations onto word-level IOB2 labels.

    A word overlapping a span receives that span's coarse label; the first
    overlapped word gets B-, later ones I-. A span crossing a sentence
    boundary is clipped per sentence and restarts as B- in the next one.
    Fine labels that normalize to O produce no entity.
    """
    spans = sorted(doc.annotations)
    for (s1, e1, l1), (s2, e2, l2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise StandoffError(
                f"overlapping annotation spans ({s1},{e1},{l1}) and ({s2},{e2},{l2})"
            )

    sentences: list[Sentence] = []
    for sent_idx, (sent_start, sent_end) in enumerate(sentence_splitter(doc.raw_text)):
        sent_text = doc.raw_text[sent_start:sent_end]
        words = word_tokenizer(sent_text)
        if not words:
            continue
        labels = [0] * len(words)
        for ann_start, ann_end, fine in spans:
            coarse = normalize_labels(fine)
            if coarse == "O":
                continue
            first = True
            for wi, (_, ws, we) in enumerate(words):
                abs_ws, abs_we = ws + sent_start, we + sent_start
                if abs_ws < ann_end and ann_start < abs_we:  # overlap
                    labels[wi] = (
                        label_set.begin_id(coarse) if first else label_set.inside_id(coarse)
                    )
                    first = False
        tokens = tuple(Token(w, l) for (w, _, _), l in zip(words, labels))
        sentences.append(Sentence(tokens, doc_id=doc.doc_id, sent_index=sent_idx))
    return sentences
