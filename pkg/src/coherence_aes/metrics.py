"""Quadratic weighted kappa, pairwise ranking accuracy (PRA) and total PRA."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass
class RatingPairSet:
    gold: Sequence[int]
    predicted: Sequence[int]
    score_range: tuple[int, int]

    def __post_init__(self):
        lo, hi = self.score_range
        if len(self.gold) != len(self.predicted) or len(self.gold) == 0:
            raise ValueError("rating lists must be non-empty and of equal length")
        if lo > hi:
            raise ValueError("empty score range")
        for r in list(self.gold) + list(self.predicted):
            if r != int(r) or not lo <= r <= hi:
                raise ValueError(f"rating {r} is not an integer in [{lo}, {hi}]")


def qwk(pairs: RatingPairSet) -> float:
    """Quadratic weighted kappa: ``1 - sum(W*O) / sum(W*E)``."""
    lo, hi = pairs.score_range
    K = hi - lo + 1
    a = np.asarray(pairs.gold, dtype=np.int64) - lo
    b = np.asarray(pairs.predicted, dtype=np.int64) - lo
    O = np.zeros((K, K))
    np.add.at(O, (a, b), 1.0)
    if K == 1:
        return 1.0
    idx = np.arange(K)
    W = (idx[:, None] - idx[None, :]) ** 2 / (K - 1) ** 2
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / O.sum()
    denom = (W * E).sum()
    if denom == 0.0:
        if (W * O).sum() == 0.0:
            return 1.0
        raise ZeroDivisionError("kappa undefined: expected disagreement is zero")
    return float(1.0 - (W * O).sum() / denom)


def qwk_from_scores(gold, predicted, score_range: tuple[int, int]) -> float:
    """QWK after rounding both sides half-away-from-zero; the range widens to fit."""
    g = [round_half_away(x) for x in gold]
    p = [round_half_away(x) for x in predicted]
    lo = min([score_range[0]] + g + p)
    hi = max([score_range[1]] + g + p)
    return qwk(RatingPairSet(g, p, (lo, hi)))


@dataclass
class RankedPool:
    originals: dict[str, float] = field(default_factory=dict)
    # permutation id -> (origin id, score)
    permutations: dict[str, tuple[str, float]] = field(default_factory=dict)

    def external(self) -> set[str]:
        """Permutation ids whose origin lies outside the pool."""
        return {pid for pid, (oid, _) in self.permutations.items() if oid not in self.originals}


def pra(pool: RankedPool) -> float:
    """Fraction of (original, own permutation) pairs where the original wins
    strictly; ties count as wrong."""
    correct = total = 0
    for oid, score in pool.permutations.values():
        if oid not in pool.originals:
            continue
        total += 1
        correct += pool.originals[oid] > score
    if total == 0:
        raise ValueError("PRA needs at least one original/permutation pair")
    return correct / total


def tpra(pool: RankedPool) -> float:
    """Like PRA, but every original faces every permutation in the pool."""
    if not pool.originals or not pool.permutations:
        raise ValueError("TPRA needs both originals and permutations")
    perm = np.sort(np.array([s for _, s in pool.permutations.values()]))
    orig = np.array(list(pool.originals.values()))
    # permutations strictly below each original
    wins = np.searchsorted(perm, orig, side="left")
    return float(wins.sum() / (len(orig) * len(perm)))


def pool_from_rows(rows: Sequence[Mapping], score_key: str) -> RankedPool:
    """Build a pool from prediction rows: synthetic rows are permutations and
    the originals they reference are looked up by id."""
    by_id = {r["id"]: r for r in rows}
    pool = RankedPool()
    for r in rows:
        if r.get("is_synthetic"):
            pool.permutations[r["id"]] = (r["origin_id"], float(r[score_key]))
            origin = by_id.get(r["origin_id"])
            if origin is not None:
                pool.originals[origin["id"]] = float(origin[score_key])
    return pool


def macro_average(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None
