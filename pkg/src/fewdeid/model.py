"""Small transformer encoder with a linear-softmax token classification head.

Pre-LN blocks, learned position embeddings, masked self-attention over
padded batches. Word-level predictions are read off the first subtoken of
each word and IOB2-repaired.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .corpus import Corpus, Sentence
from .labels import DEFAULT_LABEL_SET, LabelSet
from .metrics import repair_bio
from .seeding import rng_from
from .subword import EncodedSentence, Vocab, encode, project_word_labels

IGNORE_ID = -100
_MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    hidden_dim: int = 128
    ffn_dim: int = 256
    max_len: int = 128
    dropout_p: float = 0.1
    num_labels: int = 15

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1): {self.dropout_p}")

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


def _truncated_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    """Normal(0, std) with resampling outside +-2 std."""
    out = rng.normal(0.0, std, size=shape)
    while True:
        bad = np.abs(out) > 2 * std
        if not bad.any():
            break
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
    return out.astype(dtype)


class ParameterSet:
    """All learnable tensors of one model, keyed by name."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> dict[str, Tensor]:
        return self.tensors

    @property
    def dtype(self):
        return self.tensors["tok_emb"].dtype

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            self.config,
            {
                k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k)
                for k, v in self.tensors.items()
            },
        )

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(
            self.config,
            {
                k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad, name=k)
                for k, v in self.tensors.items()
            },
        )

    def save(self, path, extra_meta: dict | None = None):
        meta = {"model_config": asdict(self.config), "config_hash": self.config.hash()}
        if extra_meta:
            meta.update(extra_meta)
        save_arrays(path, {k: v.data for k, v in self.tensors.items()}, meta)

    @classmethod
    def load(cls, path) -> "ParameterSet":
        arrays, meta = load_arrays(path)
        config = ModelConfig(**meta["model_config"])
        if meta.get("config_hash") != config.hash():
            raise CheckpointError("checkpoint config hash mismatch")
        tensors = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(config, tensors)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ParameterSet:
    """Truncated-normal(0.02) weights; zero biases, layer-norm gains at 1,
    zero classifier bias."""
    rng = rng_from(seed, "init")
    d, ffn, c = config.hidden_dim, config.ffn_dim, config.num_labels

    t: dict[str, Tensor] = {}

    def weight(name, shape):
        t[name] = Tensor(_truncated_normal(rng, shape, 0.02, dtype), requires_grad=True, name=name)

    def zeros(name, shape):
        t[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)

    def ones(name, shape):
        t[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True, name=name)

    weight("tok_emb", (config.vocab_size, d))
    weight("pos_emb", (config.max_len, d))
    for i in range(config.layers):
        p = f"layer{i}."
        ones(p + "ln1_g", (d,))
        zeros(p + "ln1_b", (d,))
        for proj in ("q", "k", "v", "o"):
            weight(p + f"w{proj}", (d, d))
            zeros(p + f"b{proj}", (d,))
        ones(p + "ln2_g", (d,))
        zeros(p + "ln2_b", (d,))
        weight(p + "w_ff1", (d, ffn))
        zeros(p + "b_ff1", (ffn,))
        weight(p + "w_ff2", (ffn, d))
        zeros(p + "b_ff2", (d,))
    ones("ln_f_g", (d,))
    zeros("ln_f_b", (d,))
    weight("cls_w", (d, c))
    zeros("cls_b", (c,))
    return ParameterSet(config, t)


def pad_batch(batch: list[EncodedSentence], pad_id: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stack encodings into (ids, real_mask), both (B, T_max)."""
    if not batch:
        raise ValueError("empty batch")
    t_max = max(1, max(len(e) for e in batch))
    ids = np.full((len(batch), t_max), pad_id, dtype=np.int64)
    mask = np.zeros((len(batch), t_max), dtype=bool)
    for i, e in enumerate(batch):
        ids[i, : len(e)] = e.subtoken_ids
        mask[i, : len(e)] = True
    return ids, mask


def forward(
    params: ParameterSet,
    batch: list[EncodedSentence],
    train_mode: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Run the encoder + classifier over a padded batch.

    Returns (logits (B, T, num_labels), real-position mask (B, T)).
    Padding is masked out of attention, so non-pad logits do not depend on
    how much padding a batch carries.
    """
    cfg = params.config
    ids, mask = pad_batch(batch)
    b, t = ids.shape
    if t > cfg.max_len:
        raise ValueError(f"batch width {t} exceeds max_len {cfg.max_len}")
    if train_mode and cfg.dropout_p > 0 and dropout_rng is None:
        raise ValueError("train_mode forward needs a dropout rng")

    dtype = params.dtype
    heads, d = cfg.heads, cfg.hidden_dim
    dh = d // heads
    attn_bias = Tensor(
        np.where(mask, 0.0, _MASK_VALUE).astype(dtype).reshape(b, 1, 1, t)
    )

    def drop(x: Tensor) -> Tensor:
        if train_mode and cfg.dropout_p > 0:
            return ad.dropout(x, cfg.dropout_p, dropout_rng)
        return x

    x = ad.add(
        ad.embedding_lookup(params["tok_emb"], ids),
        ad.embedding_lookup(params["pos_emb"], np.arange(t)),
    )
    x = drop(x)

    for i in range(cfg.layers):
        p = f"layer{i}."
        h = ad.layer_norm(x, params[p + "ln1_g"], params[p + "ln1_b"])

        def proj(name: str) -> Tensor:
            y = ad.add(ad.matmul(h, params[p + "w" + name]), params[p + "b" + name])
            return ad.transpose(ad.reshape(y, (b, t, heads, dh)), (0, 2, 1, 3))

        q, k, v = proj("q"), proj("k"), proj("v")
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        attn = ad.softmax(ad.add(scores, attn_bias), axis=-1)
        ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (b, t, d))
        out = ad.add(ad.matmul(ctx, params[p + "wo"]), params[p + "bo"])
        x = ad.add(x, drop(out))

        h2 = ad.layer_norm(x, params[p + "ln2_g"], params[p + "ln2_b"])
        f = ad.gelu(ad.add(ad.matmul(h2, params[p + "w_ff1"]), params[p + "b_ff1"]))
        f = ad.add(ad.matmul(f, params[p + "w_ff2"]), params[p + "b_ff2"])
        x = ad.add(x, drop(f))

    x = ad.layer_norm(x, params["ln_f_g"], params["ln_f_b"])
    logits = ad.add(ad.matmul(x, params["cls_w"]), params["cls_b"])
    return logits, mask


def loss(logits: Tensor, aligned_labels: np.ndarray, ignore_id: int = IGNORE_ID) -> Tensor:
    """Mean NLL per labeled token over the whole batch."""
    b, t, c = logits.shape
    flat = ad.reshape(logits, (b * t, c))
    return ad.cross_entropy_with_ignore(flat, np.asarray(aligned_labels).reshape(-1), ignore_id)


def batch_labels(
    batch: list[EncodedSentence],
    word_labels: list[list[int]],
    t_max: int,
    ignore_id: int = IGNORE_ID,
) -> np.ndarray:
    """Aligned (B, T) label matrix: word labels on first pieces, ignore
    everywhere else (continuations and padding)."""
    from .subword import align_labels

    out = np.full((len(batch), t_max), ignore_id, dtype=np.int64)
    for i, (enc, labels) in enumerate(zip(batch, word_labels)):
        aligned = align_labels(enc, labels[: enc.num_words], ignore_id)
        out[i, : len(aligned)] = aligned
    return out


def predict(
    sentence: Sentence,
    vocab: Vocab,
    params: ParameterSet,
    label_set: LabelSet = DEFAULT_LABEL_SET,
) -> list[int]:
    """Word-level BIO ids: argmax at first-piece positions, IOB2-repaired.

    Words dropped by encoder truncation are labeled O. Ties at argmax go to
    the lowest label index (numpy argmax convention).
    """
    return predict_batch([sentence], vocab, params, label_set)[0]


def predict_batch(
    sentences: list[Sentence],
    vocab: Vocab,
    params: ParameterSet,
    label_set: LabelSet = DEFAULT_LABEL_SET,
) -> list[list[int]]:
    if not sentences:
        return []
    encoded = [encode(s, vocab, params.config.max_len) for s in sentences]
    with ad.no_grad():
        logits, _ = forward(params, encoded, train_mode=False)
    pred_ids = np.argmax(logits.data, axis=-1)
    out: list[list[int]] = []
    for i, (sent, enc) in enumerate(zip(sentences, encoded)):
        sub_labels = list(pred_ids[i, : len(enc)])
        words = project_word_labels(enc, sub_labels)
        words = [int(w) for w in words]
        words += [0] * (len(sent) - len(words))  # truncated words default to O
        out.append(repair_bio(words, label_set))
    return out


def predict_corpus(
    corpus: Corpus,
    vocab: Vocab,
    params: ParameterSet,
    batch_size: int = 64,
) -> Corpus:
    """Predicted copy of a corpus (same words, model labels)."""
    sentences: list[Sentence] = []
    for start in range(0, len(corpus), batch_size):
        chunk = corpus.sentences[start : start + batch_size]
        for sent, labels in zip(chunk, predict_batch(chunk, vocab, params, corpus.label_set)):
            sentences.append(sent.with_labels(labels))
    return Corpus(sentences, corpus.label_set, name=f"{corpus.name}-pred")


class Tagger:
    """Frozen parameters + vocabulary, bundled for inference."""

    def __init__(self, params: ParameterSet, vocab: Vocab, label_set: LabelSet = DEFAULT_LABEL_SET):
        self.params = params
        self.vocab = vocab
        self.label_set = label_set

    def predict_batch(self, sentences: list[Sentence]) -> list[list[int]]:
        out: list[list[int]] = []
        for start in range(0, len(sentences), 64):
            out.extend(
                predict_batch(sentences[start : start + 64], self.vocab, self.params, self.label_set)
            )
        return out

    def predict_corpus(self, corpus: Corpus) -> Corpus:
        return predict_corpus(corpus, self.vocab, self.params)

    @classmethod
    def load(cls, checkpoint_path, vocab_path) -> "Tagger":
        return cls(ParameterSet.load(checkpoint_path), Vocab.load(vocab_path))
