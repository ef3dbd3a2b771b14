import numpy as np
import pytest

from fewdeid import autodiff as ad
from fewdeid.autodiff import grad_check
from fewdeid.corpus import Corpus, Sentence, Token
from fewdeid.labels import DEFAULT_LABEL_SET
from fewdeid.model import (
    IGNORE_ID,
    ModelConfig,
    ParameterSet,
    batch_labels,
    forward,
    init_params,
    loss,
    predict,
    predict_batch,
)
from fewdeid.seeding import rng_from
from fewdeid.subword import SPECIALS, Vocab, encode

LS = DEFAULT_LABEL_SET

CHARS = list("abcdefgh")
VOCAB = Vocab(list(SPECIALS) + CHARS, [])  # char-level pieces


def tiny_config(**kw):
    defaults = dict(
        vocab_size=len(VOCAB), layers=2, heads=2, hidden_dim=16, ffn_dim=32,
        max_len=32, dropout_p=0.1, num_labels=LS.num_labels,
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


def make_sentences(n, seed=0, min_len=2, max_len=6):
    rng = rng_from(seed, "sents")
    out = []
    for _ in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        words = ["".join(rng.choice(CHARS, size=int(rng.integers(1, 4)))) for _ in range(k)]
        labels = [int(x) for x in rng.integers(0, LS.num_labels, size=k)]
        from fewdeid.metrics import repair_bio

        labels = repair_bio(labels)
        out.append(Sentence(tuple(Token(w, l) for w, l in zip(words, labels))))
    return out


class TestForward:
    def test_zero_classifier_gives_uniform_distribution(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=1)
        params["cls_w"].data[:] = 0
        params["cls_b"].data[:] = 0
        enc = [encode(s, VOCAB, cfg.max_len) for s in make_sentences(2)]
        logits, mask = forward(params, enc)
        probs = ad.softmax(ad.Tensor(logits.data)).data
        np.testing.assert_allclose(probs[mask], 1.0 / cfg.num_labels, atol=1e-6)

    def test_padding_does_not_change_real_logits(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=2)
        short, long = make_sentences(2, seed=5, min_len=2, max_len=3)[0], make_sentences(
            2, seed=6, min_len=8, max_len=10
        )[0]
        enc_short = encode(short, VOCAB, cfg.max_len)
        enc_long = encode(long, VOCAB, cfg.max_len)
        alone, _ = forward(params, [enc_short])
        padded, _ = forward(params, [enc_short, enc_long])
        np.testing.assert_allclose(
            alone.data[0, : len(enc_short)], padded.data[0, : len(enc_short)], atol=1e-5
        )

    def test_eval_forward_deterministic(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=3)
        enc = [encode(s, VOCAB, cfg.max_len) for s in make_sentences(3, seed=7)]
        a, _ = forward(params, enc, train_mode=False)
        b, _ = forward(params, enc, train_mode=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_batch_permutation_equivariance(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=4)
        sents = make_sentences(4, seed=8, min_len=3, max_len=3)
        enc = [encode(s, VOCAB, cfg.max_len) for s in sents]
        out, _ = forward(params, enc)
        perm = [2, 0, 3, 1]
        out_p, _ = forward(params, [enc[i] for i in perm])
        np.testing.assert_allclose(out_p.data, out.data[perm], atol=1e-6)

    def test_out_of_range_id_rejected(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=0)
        from fewdeid.subword import EncodedSentence

        bad = EncodedSentence((cfg.vocab_size + 3,), (0,), (True,))
        with pytest.raises(ad.ShapeError):
            forward(params, [bad])

    def test_softmax_of_logits_rows_sum_to_one(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=9)
        enc = [encode(s, VOCAB, cfg.max_len) for s in make_sentences(2, seed=9)]
        logits, _ = forward(params, enc)
        probs = ad.softmax(ad.Tensor(logits.data)).data
        np.testing.assert_allclose(probs.sum(-1), np.ones(probs.shape[:2]), atol=1e-6)


class TestLoss:
    def test_uniform_logits_ln15(self):
        logits = ad.Tensor(np.zeros((1, 4, 15)))
        targets = np.array([[1, 3, 0, 2]])
        assert abs(loss(logits, targets).item() - np.log(15)) < 1e-6

    def test_ignored_positions_contribute_nothing(self):
        rng = rng_from(11, "ign")
        data = rng.normal(size=(1, 3, 15)).astype(np.float32)
        targets = np.array([[1, 2, 4]])
        base = loss(ad.Tensor(data), targets).item()
        # double the width with ignored positions: same loss
        padded = np.concatenate([data, rng.normal(size=(1, 3, 15)).astype(np.float32)], axis=1)
        targets_padded = np.array([[1, 2, 4, IGNORE_ID, IGNORE_ID, IGNORE_ID]])
        assert abs(loss(ad.Tensor(padded), targets_padded).item() - base) < 1e-6

    def test_batch_labels_alignment(self):
        cfg = tiny_config()
        sents = make_sentences(2, seed=12, min_len=2, max_len=3)
        enc = [encode(s, VOCAB, cfg.max_len) for s in sents]
        t_max = max(len(e) for e in enc)
        mat = batch_labels(enc, [s.label_ids for s in sents], t_max)
        for i, e in enumerate(enc):
            firsts = [j for j, f in enumerate(e.first_piece_mask) if f]
            assert [mat[i, j] for j in firsts] == sents[i].label_ids
            assert all(mat[i, j] == IGNORE_ID for j in range(len(e), t_max))


class TestPredict:
    def test_zero_classifier_predicts_all_o(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=5)
        params["cls_w"].data[:] = 0
        params["cls_b"].data[:] = 0
        sent = make_sentences(1, seed=13)[0]
        assert predict(sent, VOCAB, params) == [0] * len(sent)

    def test_biased_inside_label_repaired_to_begin(self):
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=6)
        params["cls_w"].data[:] = 0
        params["cls_b"].data[:] = 0
        params["cls_b"].data[LS.label_id("I-DATE")] = 10.0
        sent = make_sentences(1, seed=14, min_len=3, max_len=3)[0]
        out = predict(sent, VOCAB, params)
        names = [LS.label_name(l) for l in out]
        assert names[0] == "B-DATE"
        assert names[1:] == ["I-DATE"] * (len(sent) - 1)

    def test_prediction_always_valid_iob2(self):
        from fewdeid.metrics import repair_bio

        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=7)
        for sent in make_sentences(20, seed=15):
            out = predict(sent, VOCAB, params)
            assert repair_bio(out) == out
            assert len(out) == len(sent)

    def test_empty_batch(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=8)
        assert predict_batch([], VOCAB, params) == []


class TestCheckpoint:
    def test_save_load_bit_exact(self, tmp_path):
        cfg = tiny_config()
        params = init_params(cfg, seed=21)
        path = tmp_path / "model.ckpt"
        params.save(path)
        loaded = ParameterSet.load(path)
        assert loaded.config == cfg
        for name, t in params.named().items():
            np.testing.assert_array_equal(t.data, loaded[name].data)
            assert t.data.dtype == loaded[name].data.dtype

    def test_config_hash_verified(self, tmp_path):
        from fewdeid.checkpoint import CheckpointError, load_arrays, save_arrays

        cfg = tiny_config()
        params = init_params(cfg, seed=22)
        path = tmp_path / "model.ckpt"
        params.save(path)
        arrays, meta = load_arrays(path)
        meta["config_hash"] = "0" * 16
        save_arrays(path, arrays, meta)
        with pytest.raises(CheckpointError, match="hash"):
            ParameterSet.load(path)


class TestGradients:
    def test_full_model_matches_finite_differences_small(self):
        """Scaled-down version of the acceptance gradient check."""
        cfg = tiny_config(dropout_p=0.0)
        params = init_params(cfg, seed=30, dtype=np.float64)
        sents = make_sentences(4, seed=31)
        enc = [encode(s, VOCAB, cfg.max_len) for s in sents]
        t_max = max(len(e) for e in enc)
        targets = batch_labels(enc, [s.label_ids for s in sents], t_max)

        def f():
            logits, _ = forward(params, enc, train_mode=False)
            return loss(logits, targets)

        err = grad_check(f, params.named(), eps=1e-4, samples_per_tensor=4, seed=0)
        assert err <= 1e-4, f"max relative error {err}"
