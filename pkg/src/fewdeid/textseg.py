"""Rule-based sentence splitting and word tokenization with character offsets.

Offsets are kept end-to-end so word-level predictions can be projected back
onto the raw note for redaction.
"""

from __future__ import annotations

import unicodedata
from importlib import resources

_SENTENCE_FINAL = ".!?"


def _load_abbreviations() -> frozenset[str]:
    text = resources.files("fewdeid.data").joinpath("abbreviations_es_ca.txt").read_text("utf-8")
    abbrevs = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            abbrevs.add(line)
    return frozenset(abbrevs)


ABBREVIATIONS = _load_abbreviations()


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def split_sentences(note_text: str) -> list[str]:
    """Split on sentence-final punctuation, guarded against abbreviations.

    The concatenation of the output equals the input once whitespace is
    ignored; leading/trailing whitespace of each sentence is stripped.
    """
    spans = split_sentence_spans(note_text)
    return [note_text[s:e] for s, e in spans]


def split_sentence_spans(note_text: str) -> list[tuple[int, int]]:
    """Like split_sentences but returns (start, end) character spans."""
    spans: list[tuple[int, int]] = []
    n = len(note_text)
    start = 0
    i = 0
    while i < n:
        ch = note_text[i]
        boundary = False
        if ch == "\n":
            boundary = True
        elif ch in _SENTENCE_FINAL:
            # consume a run of closing punctuation (e.g. '?!', ').')
            j = i
            while j + 1 < n and note_text[j + 1] in _SENTENCE_FINAL + ")]\"'":
                j += 1
            follows_space = j + 1 >= n or note_text[j + 1].isspace()
            if follows_space and not (ch == "." and _preceding_is_abbreviation(note_text, i)):
                i = j
                boundary = True
        if boundary:
            chunk = note_text[start : i + 1].strip()
            if chunk:
                s = start + _lstrip_len(note_text[start : i + 1])
                spans.append((s, s + len(chunk)))
            start = i + 1
        i += 1
    chunk = note_text[start:].strip()
    if chunk:
        s = start + _lstrip_len(note_text[start:])
        spans.append((s, s + len(chunk)))
    return spans


def _lstrip_len(s: str) -> int:
    return len(s) - len(s.lstrip())


def _preceding_is_abbreviation(text: str, dot_index: int) -> bool:
    """True when the token ending at the period is a guarded abbreviation
    or a single letter / digit run (initials, enumerations, decimals)."""
    j = dot_index - 1
    while j >= 0 and not text[j].isspace() and not (_is_punct(text[j]) and text[j] != "."):
        j -= 1
    word = text[j + 1 : dot_index].lower().rstrip(".")
    if not word:
        return False
    if word in ABBREVIATIONS:
        return True
    if len(word) == 1 and word.isalpha():
        return True
    # decimal or enumerated numbers: "3.", "13.01"
    if word.replace(".", "").isdigit() and dot_index + 1 < len(text) and not text[dot_index + 1] == "\n":
        return True
    return False


def tokenize_words(text: str) -> list[tuple[str, int, int]]:
    """Whitespace + punctuation tokenizer; punctuation marks become their own
    tokens. Returns (token, start_char, end_char) triples."""
    out: list[tuple[str, int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if _is_punct(ch):
            out.append((ch, i, i + 1))
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace() and not _is_punct(text[j]):
            j += 1
        out.append((text[i:j], i, j))
        i = j
    return out
