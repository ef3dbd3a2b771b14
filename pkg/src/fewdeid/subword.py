"""Byte-pair-encoding subword vocabulary shared across languages.

Words are segmented independently of each other; labels live on the first
piece of each word and continuation pieces are ignored during training and
prediction.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Sentence

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")


class VocabError(ValueError):
    pass


@dataclass
class Vocab:
    pieces: list[str]  # id -> piece string; ids dense from 0, specials first
    merges: list[tuple[str, str]]  # in training order (rank = priority)
    _piece_ids: dict[str, int] = field(init=False, repr=False)
    _merge_ranks: dict[tuple[str, str], int] = field(init=False, repr=False)
    _word_cache: dict[str, list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.pieces)) != len(self.pieces):
            raise VocabError("duplicate pieces")
        self._piece_ids = {p: i for i, p in enumerate(self.pieces)}
        self._merge_ranks = {m: i for i, m in enumerate(self.merges)}
        self._word_cache = {}

    def __len__(self) -> int:
        return len(self.pieces)

    def piece_id(self, piece: str) -> int:
        return self._piece_ids.get(piece, UNK)

    def encode_word(self, word: str) -> list[int]:
        """Segment one word into piece ids, merging by training priority.
        Characters never seen in training fall back to UNK (logged)."""
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        parts = list(word)
        while len(parts) > 1:
            best_rank = None
            best_pos = -1
            for i in range(len(parts) - 1):
                rank = self._merge_ranks.get((parts[i], parts[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_pos = rank, i
            if best_rank is None:
                break
            merged = parts[best_pos] + parts[best_pos + 1]
            # merge every occurrence of this pair, left to right
            out = []
            i = 0
            while i < len(parts):
                if (
                    i + 1 < len(parts)
                    and parts[i] == self.merges[best_rank][0]
                    and parts[i + 1] == self.merges[best_rank][1]
                ):
                    out.append(merged)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            parts = out
        ids = []
        for p in parts:
            pid = self._piece_ids.get(p)
            if pid is None:
                log.warning("unknown character %r in word %r: falling back to <unk>", p, word)
                pid = UNK
            ids.append(pid)
        self._word_cache[word] = ids
        return ids

    def decode_word(self, piece_ids: list[int]) -> str:
        return "".join(self.pieces[i] for i in piece_ids)

    def save(self, path: str | Path):
        lines = ["fewdeid-bpe v1", f"#pieces {len(self.pieces)}"]
        lines.extend(self.pieces)
        lines.append(f"#merges {len(self.merges)}")
        lines.extend(f"{a}\t{b}" for a, b in self.merges)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if not lines or lines[0] != "fewdeid-bpe v1":
            raise VocabError(f"unrecognized vocab file header: {lines[:1]}")
        if not lines[1].startswith("#pieces "):
            raise VocabError("missing #pieces section")
        n = int(lines[1].split()[1])
        pieces = lines[2 : 2 + n]
        merge_hdr = lines[2 + n]
        if not merge_hdr.startswith("#merges "):
            raise VocabError("missing #merges section")
        m = int(merge_hdr.split()[1])
        merges = []
        for line in lines[3 + n : 3 + n + m]:
            a, b = line.split("\t")
            merges.append((a, b))
        return cls(pieces, merges)


@dataclass(frozen=True)
class EncodedSentence:
    subtoken_ids: tuple[int, ...]
    word_index: tuple[int, ...]  # per subtoken: index of the originating word
    first_piece_mask: tuple[bool, ...]

    @property
    def num_words(self) -> int:
        return self.word_index[-1] + 1 if self.word_index else 0

    def __len__(self) -> int:
        return len(self.subtoken_ids)


def train_bpe(corpus_text: list[str], vocab_size: int, seed: int = 0) -> Vocab:
    """Learn a BPE vocabulary from raw text lines.

    Deterministic: merge candidates are ranked by frequency, ties broken
    lexicographically on the pair. The seed argument is accepted for
    interface stability; training consumes no randomness.
    """
    del seed
    word_freq = Counter()
    for line in corpus_text:
        word_freq.update(line.split())
    alphabet = sorted({ch for w in word_freq for ch in w})
    if vocab_size < len(alphabet) + len(SPECIALS):
        raise VocabError(
            f"vocab_size {vocab_size} below alphabet ({len(alphabet)}) + specials ({len(SPECIALS)})"
        )
    for ch in alphabet:
        if ch in SPECIALS:
            raise VocabError(f"training text collides with special piece {ch!r}")

    pieces = list(SPECIALS) + alphabet
    merges: list[tuple[str, str]] = []
    words = {w: list(w) for w in word_freq}

    while len(pieces) < vocab_size:
        pair_counts: Counter[tuple[str, str]] = Counter()
        for w, parts in words.items():
            freq = word_freq[w]
            for i in range(len(parts) - 1):
                pair_counts[(parts[i], parts[i + 1])] += freq
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merged = best[0] + best[1]
        if merged in pieces:  # can occur when distinct merge paths collide
            del pair_counts
            words = {w: _apply_pair(parts, best, merged) for w, parts in words.items()}
            merges.append(best)
            continue
        merges.append(best)
        pieces.append(merged)
        words = {w: _apply_pair(parts, best, merged) for w, parts in words.items()}
    return Vocab(pieces, merges)


def _apply_pair(parts: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    if len(parts) < 2:
        return parts
    out = []
    i = 0
    while i < len(parts):
        if i + 1 < len(parts) and parts[i] == pair[0] and parts[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(parts[i])
            i += 1
    return out


def encode(sentence: Sentence, vocab: Vocab, max_len: int = 128) -> EncodedSentence:
    """Encode a sentence to subtokens with word alignment bookkeeping.

    Truncation drops whole words from the end; the first word is always
    kept (hard-truncated in the degenerate case where it alone exceeds
    max_len, so encodings are never empty).
    """
    ids: list[int] = []
    word_index: list[int] = []
    first_mask: list[bool] = []
    for wi, word in enumerate(sentence.words):
        piece_ids = vocab.encode_word(word)
        if wi == 0 and len(piece_ids) > max_len:
            piece_ids = piece_ids[:max_len]
        if len(ids) + len(piece_ids) > max_len:
            break
        for k, pid in enumerate(piece_ids):
            ids.append(pid)
            word_index.append(wi)
            first_mask.append(k == 0)
    return EncodedSentence(tuple(ids), tuple(word_index), tuple(first_mask))


def decode_words(encoded: EncodedSentence, vocab: Vocab) -> list[str]:
    """Reconstruct word strings from an encoding (UNK pieces render as <unk>)."""
    words: list[list[int]] = [[] for _ in range(encoded.num_words)]
    for pid, wi in zip(encoded.subtoken_ids, encoded.word_index):
        words[wi].append(pid)
    return [vocab.decode_word(pids) for pids in words]


def align_labels(encoded: EncodedSentence, word_labels: list[int], ignore_id: int) -> list[int]:
    """Place each word's label on its first subtoken; continuations get ignore_id."""
    if len(word_labels) != encoded.num_words:
        raise ValueError(
            f"{len(word_labels)} word labels for {encoded.num_words} encoded words"
        )
    return [
        word_labels[wi] if first else ignore_id
        for wi, first in zip(encoded.word_index, encoded.first_piece_mask)
    ]


def project_word_labels(encoded: EncodedSentence, subtoken_labels: list[int]) -> list[int]:
    """Inverse of align_labels: read word labels off the first-piece positions."""
    out: list[int] = []
    for label, first in zip(subtoken_labels, encoded.first_piece_mask):
        if first:
            out.append(label)
    return out
