import pytest

from fewdeid.labels import DEFAULT_LABEL_SET
from fewdeid.metrics import repair_bio
from fewdeid.synth import (
    SynthConfig,
    SynthConfigError,
    build_lexicons,
    corpus_text,
    generate_synthetic_bilingual,
    parse_synth_config,
    write_synth_config,
)

LS = DEFAULT_LABEL_SET

SMALL = SynthConfig(source_size=300, target_train_size=120, target_dev_size=120)


def word_types(corpus):
    return {w for s in corpus for w in s.words}


class TestConfig:
    def test_invalid_rho(self):
        with pytest.raises(SynthConfigError):
            SynthConfig(rho=1.5)

    def test_invalid_size(self):
        with pytest.raises(SynthConfigError):
            SynthConfig(source_size=0)

    def test_densities_must_cover_types(self):
        with pytest.raises(SynthConfigError):
            SynthConfig(densities=(("DATE", 0.5),))

    def test_config_file_round_trip(self):
        cfg = SynthConfig(source_size=42, rho=0.25, seed=9)
        assert parse_synth_config(write_synth_config(cfg)) == cfg

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(SynthConfigError, match="unknown key"):
            parse_synth_config("nonsense=1\n")

    def test_parse_comments_and_density(self):
        cfg = parse_synth_config("# comment\nrho=0.5\ndensity.DATE=0.6\n")
        assert cfg.rho == 0.5
        assert cfg.density["DATE"] == 0.6


class TestGeneration:
    def test_sizes_and_determinism(self):
        a = generate_synthetic_bilingual(SMALL)
        b = generate_synthetic_bilingual(SMALL)
        assert [len(c) for c in a] == [300, 120, 120]
        assert all(x == y for x, y in zip(a, b))

    def test_seed_override_changes_output(self):
        a = generate_synthetic_bilingual(SMALL)
        c = generate_synthetic_bilingual(SMALL, seed=99)
        assert a[0] != c[0]

    def test_splits_disjoint(self):
        src, tt, td = generate_synthetic_bilingual(SMALL)
        sets = [{tuple(s.words) for s in c} for c in (src, tt, td)]
        assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])

    def test_rho_one_identical_lexicon(self):
        cfg = SynthConfig(rho=1.0, source_size=50, target_train_size=20, target_dev_size=20)
        source_lex, target_lex, mapping = build_lexicons(cfg)
        assert mapping == {}
        assert source_lex == target_lex

    def test_rho_zero_no_shared_word_types(self):
        cfg = SynthConfig(rho=0.0, source_size=200, target_train_size=100, target_dev_size=100)
        src, tt, td = generate_synthetic_bilingual(cfg)
        assert not word_types(src) & (word_types(tt) | word_types(td))

    def test_rho_zero_shares_subword_prefixes(self):
        cfg = SynthConfig(rho=0.0, source_size=50, target_train_size=20, target_dev_size=20)
        source_lex, target_lex, mapping = build_lexicons(cfg)
        shared_prefix = sum(1 for s, t in mapping.items() if t.startswith(s[:2]))
        assert shared_prefix / len(mapping) > 0.9

    def test_density_counting_oracle(self):
        src, tt, td = generate_synthetic_bilingual(SynthConfig())
        density = SynthConfig().density
        for corpus in (src, tt, td):
            counts = {t: 0 for t in LS.phi_types}
            for s in corpus:
                for t in s.entity_types(LS):
                    counts[t] += 1
            for t, d in density.items():
                observed = counts[t] / len(corpus)
                assert abs(observed - d) <= 0.2 * d, (corpus.name, t, observed, d)

    def test_labels_valid_iob2(self):
        src, tt, td = generate_synthetic_bilingual(SMALL)
        for corpus in (src, tt, td):
            for s in corpus:
                assert repair_bio(s.label_ids) == s.label_ids

    def test_corpus_text_lines(self):
        src, _, _ = generate_synthetic_bilingual(SMALL)
        lines = corpus_text(src)
        assert len(lines) == len(src)
        assert lines[0].split() == list(src.sentences[0].words)
