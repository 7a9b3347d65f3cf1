import itertools
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coherence_aes.synthdata import (
    PromptSpec,
    build_synthetic_set,
    load_prompt_specs,
    materialize,
    permute_essay,
    select_high_scoring,
)
from coherence_aes.textpipe import Essay


def make_essay(eid, n_sent, score, prompt=1):
    texts = [f"Sentence {eid} number {i} here." for i in range(n_sent)]
    return Essay.from_text(eid, prompt, " ".join(texts), score, texts)


def test_bundled_table():
    specs = load_prompt_specs()
    assert [(s.min_score, s.max_score) for _, s in sorted(specs.items())] == [
        (2, 12), (1, 6), (0, 3), (0, 3), (0, 4), (0, 4), (0, 30), (0, 60)]
    assert [s.threshold for _, s in sorted(specs.items())] == [10, 5, 3, 3, 4, 4, 23, 45]


class TestSelect:
    def test_threshold_inclusive_and_sentence_floor(self):
        spec = PromptSpec(1, 2, 12, 10)
        corpus = [make_essay("a", 3, 10), make_essay("b", 3, 9), make_essay("c", 1, 12), make_essay("d", 2, 12),
                  make_essay("e", 3, 12, prompt=2)]
        assert [e.id for e in select_high_scoring(corpus, spec)] == ["a", "d"]

    def test_threshold_above_max(self):
        spec = PromptSpec(1, 2, 12, 13)
        assert select_high_scoring([make_essay("a", 3, 12)], spec) == []


class TestPermute:
    def test_two_sentences(self):
        recs = permute_essay(make_essay("a", 2, 10), 10, seed=1)
        assert len(recs) == 10
        assert all(r.sentence_order == (1, 0) for r in recs)
        assert [r.duplicate for r in recs] == [False] + [True] * 9

    def test_three_sentences_drawn_from_non_identity(self):
        allowed = set(itertools.permutations(range(3))) - {(0, 1, 2)}
        assert len(allowed) == 5
        for seed in range(20):
            recs = permute_essay(make_essay("a", 3, 10), 10, seed=seed)
            assert {r.sentence_order for r in recs} <= allowed

    def test_deterministic(self):
        e = make_essay("a", 6, 10)
        assert permute_essay(e, 10, seed=3) == permute_essay(e, 10, seed=3)
        assert permute_essay(e, 10, seed=3) != permute_essay(e, 10, seed=4)

    def test_too_short(self):
        with pytest.raises(ValueError):
            permute_essay(make_essay("a", 1, 10))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 9), st.integers(0, 10_000))
    def test_token_multiset_preserved(self, n, seed):
        e = make_essay("x", n, 10)
        for rec in permute_essay(e, 10, seed):
            p = materialize(e, rec)
            assert Counter(p.tokens()) == Counter(e.tokens())
            assert p.sentences != e.sentences
            assert p.origin_id == "x" and p.is_synthetic and p.coherence_label == 0.0


class TestBuild:
    def test_split_counts(self):
        folds = {"train": [make_essay("tr", 5, 11)], "dev": [make_essay("dv", 5, 11)],
                 "test": [make_essay("te", 5, 11)]}
        synth = build_synthetic_set(folds, load_prompt_specs(), seed=0)
        assert len(synth.splits["train"].kept) == 4
        assert len(synth.splits["test"].kept) == 10
        assert len(synth.splits["dev"].kept) == 10
        assert all(s.full_total == 11 for s in synth.splits.values())
        train_essays = synth.splits["train"].essays()
        assert [e.coherence_label for e in train_essays] == [1.0] + [0.0] * 4

    def test_empty_selection(self):
        folds = {"train": [make_essay("a", 5, 3)]}
        synth = build_synthetic_set(folds, load_prompt_specs())
        assert synth.splits["train"].essays() == []

    def test_missing_spec(self):
        with pytest.raises(ValueError):
            build_synthetic_set({"train": [make_essay("a", 3, 3, prompt=99)]}, load_prompt_specs())

    def test_no_leakage_and_no_identity(self):
        folds = {name: [make_essay(f"{name}{i}", 3 + i % 4, 12) for i in range(6)] for name in ("train", "dev", "test")}
        synth = build_synthetic_set(folds, load_prompt_specs(), seed=9)
        for name, part in synth.splits.items():
            ids = {e.id for e in folds[name]}
            for rec in part.records:
                assert rec.origin_id in ids
                assert rec.sentence_order != tuple(range(len(rec.sentence_order)))
            assert part.full_total == 11 * len(part.originals)

    @pytest.mark.parametrize("pid, n_total, n_selected, expected", [(1, 1783, 472, 5192), (8, 723, 72, 792)])
    def test_table_arithmetic(self, pid, n_total, n_selected, expected):
        spec = load_prompt_specs()[pid]
        corpus = []
        for i in range(n_total):
            score = spec.max_score if i < n_selected else spec.threshold - 1
            corpus.append(make_essay(f"p{pid}-{i}", 2 + i % 3, score, prompt=pid))
        synth = build_synthetic_set({"all": corpus}, load_prompt_specs(), seed=0)
        part = synth.splits["all"]
        assert len(part.originals) == n_selected
        assert part.full_total == expected
