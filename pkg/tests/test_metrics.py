import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coherence_aes.metrics import (
    RankedPool,
    RatingPairSet,
    pool_from_rows,
    pra,
    qwk,
    qwk_from_scores,
    round_half_away,
    tpra,
)


def pairwise_qwk_oracle(a, b):
    """O(N^2) form: 1 - N*sum_n (a_n - b_n)^2 / sum_{n,m} (a_n - b_m)^2."""
    n = len(a)
    num = sum((x - y) ** 2 for x, y in zip(a, b))
    den = sum((x - y) ** 2 for x in a for y in b)
    return 1.0 - n * num / den


def pra_oracle(originals, perms):
    pairs = [(originals[o], s) for o, s in perms if o in originals]
    return sum(x > y for x, y in pairs) / len(pairs)


def tpra_oracle(originals, perms):
    pairs = list(itertools.product(originals.values(), [s for _, s in perms]))
    return sum(x > y for x, y in pairs) / len(pairs)


class TestQwk:
    def test_perfect(self):
        assert qwk(RatingPairSet([1, 2, 3], [1, 2, 3], (1, 3))) == 1.0

    def test_antidiagonal(self):
        # O = [[0,0,1],[0,0,0],[1,0,0]], E = O (marginals 1,0,1), W corners = 1
        assert qwk(RatingPairSet([0, 2], [2, 0], (0, 2))) == -1.0

    def test_matches_pairwise_oracle(self):
        rnd = random.Random(5)
        for _ in range(200):
            a = [rnd.randint(0, 6) for _ in range(200)]
            b = [rnd.randint(0, 6) for _ in range(200)]
            assert qwk(RatingPairSet(a, b, (0, 6))) == pytest.approx(pairwise_qwk_oracle(a, b), abs=1e-10)

    def test_constant_equal_raters(self):
        assert qwk(RatingPairSet([2, 2], [2, 2], (0, 4))) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            RatingPairSet([0, 5], [0, 1], (0, 4))

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=2, max_size=40))
    def test_symmetric_and_self_agreement(self, pairs):
        a, b = [p[0] for p in pairs], [p[1] for p in pairs]
        if len(set(a)) > 1:
            assert qwk(RatingPairSet(a, a, (0, 5))) == pytest.approx(1.0)
        if len(set(a)) > 1 or len(set(b)) > 1 or a[0] == b[0]:
            assert qwk(RatingPairSet(a, b, (0, 5))) == pytest.approx(qwk(RatingPairSet(b, a, (0, 5))), abs=1e-12)

    def test_rounding(self):
        assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, 2.49)] == [1, 2, 3, -1, 2]
        assert qwk_from_scores([2.0, 7.0, 12.0], [2.4, 6.4, 11.6], (2, 12)) < 1.0
        assert qwk_from_scores([2.0, 7.0, 12.0], [2.4, 7.4, 11.6], (2, 12)) == 1.0


class TestRanking:
    def test_pra_all_correct(self):
        pool = RankedPool({"a": 0.9}, {"a1": ("a", 0.5), "a2": ("a", 0.4)})
        assert pra(pool) == 1.0

    def test_pra_tie_is_wrong(self):
        assert pra(RankedPool({"a": 0.5}, {"a1": ("a", 0.5)})) == 0.0

    def test_tpra_four_pairs(self):
        pool = RankedPool({"a": 0.9, "b": 0.6}, {"a'": ("a", 0.7), "b'": ("b", 0.5)})
        assert tpra(pool) == 0.75

    def test_tpra_extremes(self):
        assert tpra(RankedPool({"a": 1.0, "b": 1.0}, {"x": ("a", 0.2), "y": ("b", 0.99)})) == 1.0
        assert tpra(RankedPool({"a": 0.1, "b": 0.2}, {"x": ("a", 0.3), "y": ("b", 0.9)})) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            pra(RankedPool({"a": 1.0}, {}))
        with pytest.raises(ValueError):
            tpra(RankedPool({}, {"x": ("a", 0.1)}))

    def test_against_enumeration(self):
        rnd = random.Random(7)
        for _ in range(300):
            n_orig = rnd.randint(1, 5)
            originals = {f"o{i}": rnd.choice([0.1, 0.3, 0.5, rnd.random()]) for i in range(n_orig)}
            perms = [(f"o{rnd.randrange(n_orig)}", rnd.choice([0.1, 0.3, 0.5, rnd.random()]))
                     for _ in range(rnd.randint(1, 12))]
            pool = RankedPool(originals, {f"p{i}": p for i, p in enumerate(perms)})
            assert pra(pool) == pra_oracle(originals, perms)
            assert tpra(pool) == tpra_oracle(originals, perms)

    def test_three_originals_mixed(self):
        originals = {"a": 0.8, "b": 0.4, "c": 0.6}
        perms = [("a", 0.7), ("a", 0.9), ("b", 0.3), ("b", 0.4), ("c", 0.1)]
        pool = RankedPool(originals, {f"p{i}": p for i, p in enumerate(perms)})
        assert pra(pool) == pra_oracle(originals, perms) == 3 / 5

    @given(st.lists(st.integers(-500, 500).map(lambda i: i / 100), min_size=4, max_size=12))
    def test_order_invariance(self, scores):
        originals = {f"o{i}": s for i, s in enumerate(scores[:2])}
        perms = {f"p{i}": (f"o{i % 2}", s) for i, s in enumerate(scores[2:])}
        pool = RankedPool(originals, perms)
        f = lambda x: np.exp(x) * 3 + 1
        moved = RankedPool({k: f(v) for k, v in originals.items()},
                           {k: (o, f(s)) for k, (o, s) in perms.items()})
        assert pra(pool) == pra(moved) and tpra(pool) == tpra(moved)

    @given(st.floats(0, 1), st.lists(st.floats(0, 1), min_size=1, max_size=8))
    def test_single_original_tpra_equals_pra(self, o, ps):
        pool = RankedPool({"o": o}, {f"p{i}": ("o", s) for i, s in enumerate(ps)})
        assert tpra(pool) == pytest.approx(pra(pool))

    def test_pool_from_rows(self):
        rows = [
            {"id": "a", "is_synthetic": False, "coherence": 0.9},
            {"id": "a1", "is_synthetic": True, "origin_id": "a", "coherence": 0.2},
            {"id": "z", "is_synthetic": False, "coherence": 0.1},
        ]
        pool = pool_from_rows(rows, "coherence")
        assert pool.originals == {"a": 0.9}
        assert pool.permutations == {"a1": ("a", 0.2)}
