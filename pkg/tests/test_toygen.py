import itertools

import numpy as np
import pytest

from coherence_aes.harness.toygen import (
    JOINT_SENTENCES,
    QUALITY_ADJ,
    broken_steps,
    generate,
    quality_count,
    write_toy_corpus,
)
from coherence_aes.metrics import qwk_from_scores
from coherence_aes.synthdata import build_synthetic_set, materialize


def links(sentences):
    """Adjacent sentence pairs where the first's closing word opens the second."""
    return sum(a[-2] == b[0] for a, b in zip(sentences, sentences[1:]))


def all_essays(folds):
    return [e for split in folds.values() for e in split]


class TestCoherence:
    def test_shape_and_chaining(self):
        folds, specs = generate("coherence", 60, seed=1)
        essays = all_essays(folds)
        assert len(essays) == 60
        assert {len(v) for v in folds.values()} == {36, 12}
        for e in essays:
            assert 4 <= e.num_sentences <= 8
            assert links(e.sentences) == e.num_sentences - 1
            assert all(s[-1] == "." for s in e.sentences)

    def test_permutations_break_half_the_links(self):
        folds, specs = generate("coherence", 60, seed=2)
        synth = build_synthetic_set(folds, specs, seed=2)
        fractions = []
        for part in synth.splits.values():
            by_id = {e.id: e for e in part.originals}
            for rec in part.kept:
                perm = materialize(by_id[rec.origin_id], rec)
                n = perm.num_sentences
                fractions.append(1 - links(perm.sentences) / (n - 1))
                assert broken_steps(rec.sentence_order) == (n - 1) - links(perm.sentences)
        assert np.mean(fractions) >= 0.5

    @pytest.mark.parametrize("n", [4, 5, 6])
    def test_expected_broken_fraction_exhaustive(self, n):
        orders = [p for p in itertools.permutations(range(n)) if list(p) != sorted(p)]
        assert np.mean([broken_steps(p) / (n - 1) for p in orders]) >= 0.5


class TestScoring:
    def test_count_oracle_is_perfect(self):
        folds, specs = generate("scoring", 80, seed=3)
        essays = all_essays(folds)
        gold = [e.gold_score for e in essays]
        pred = [quality_count(e) for e in essays]
        assert gold == pred
        assert qwk_from_scores(gold, pred, (0, 6)) == 1.0
        assert len(set(gold)) > 3


class TestJoint:
    def test_structure(self):
        folds, specs = generate("joint", 50, seed=4)
        for e in all_essays(folds):
            assert e.num_sentences == JOINT_SENTENCES
            assert links(e.sentences) == JOINT_SENTENCES - 1
            assert e.gold_score == sum(t in QUALITY_ADJ for t in e.tokens())
        spec = specs[1]
        assert (spec.min_score, spec.max_score, spec.threshold) == (0, 6, 6)
        assert any(e.gold_score == 6 for e in all_essays(folds))


class TestFiles:
    def test_deterministic(self, tmp_path):
        for kind in ("coherence", "scoring", "joint"):
            write_toy_corpus(kind, 30, 5, tmp_path / f"a{kind}")
            write_toy_corpus(kind, 30, 5, tmp_path / f"b{kind}")
            names = sorted(p.name for p in (tmp_path / f"a{kind}").iterdir())
            assert "prompts.json" in names and "train.jsonl" in names
            for name in names:
                assert (tmp_path / f"a{kind}" / name).read_bytes() == (tmp_path / f"b{kind}" / name).read_bytes()
        write_toy_corpus("coherence", 30, 6, tmp_path / "c")
        assert (tmp_path / "c" / "train.jsonl").read_bytes() != (tmp_path / "acoherence" / "train.jsonl").read_bytes()

    def test_synthetic_written(self, tmp_path):
        counts = write_toy_corpus("coherence", 30, 0, tmp_path)
        assert counts["synthetic"]["test"]["full_total"] == 11 * counts["test"]
        assert (tmp_path / "train.synthetic.jsonl").exists()

    def test_errors(self):
        with pytest.raises(ValueError):
            generate("coherence", 19, 0)
        with pytest.raises(ValueError):
            generate("poetry", 50, 0)
