"""Adversarial corpus construction: pick high-scoring essays per prompt,
shuffle their sentences, and distribute permutations over the folds."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .aes_model import ScoreScale
from .textpipe import Essay


@dataclass(frozen=True)
class PromptSpec:
    prompt_id: int
    min_score: float
    max_score: float
    threshold: float

    def __post_init__(self):
        if not self.min_score <= self.threshold <= self.max_score + 1:
            raise ValueError(f"prompt {self.prompt_id}: threshold outside score range")

    @property
    def scale(self) -> ScoreScale:
        return ScoreScale(self.prompt_id, self.min_score, self.max_score)


def load_prompt_specs(path=None) -> dict[int, PromptSpec]:
    """Prompt table from a JSON file; the bundled ASAP table when ``path`` is None."""
    if path is None:
        text = resources.files("coherence_aes").joinpath("data/asap_prompts.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = json.loads(text)["prompts"]
    return {int(r["prompt_id"]): PromptSpec(int(r["prompt_id"]), r["min_score"], r["max_score"], r["threshold"])
            for r in rows}


def dump_prompt_specs(specs: Mapping[int, PromptSpec]) -> str:
    rows = [{"prompt_id": s.prompt_id, "min_score": s.min_score, "max_score": s.max_score, "threshold": s.threshold}
            for _, s in sorted(specs.items())]
    return json.dumps({"prompts": rows}, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class PermutationRecord:
    origin_id: str
    permutation_index: int
    sentence_order: tuple[int, ...]
    duplicate: bool = False

    def __post_init__(self):
        if len(self.sentence_order) < 2 or list(self.sentence_order) == sorted(self.sentence_order):
            raise ValueError("a permutation must reorder at least two sentences")


def essay_rng(seed: int, key: str) -> np.random.Generator:
    """Generator private to one essay, so serial and parallel runs agree."""
    digest = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, digest])


def select_high_scoring(corpus: Iterable[Essay], spec: PromptSpec) -> list[Essay]:
    return [e for e in corpus
            if e.prompt_id == spec.prompt_id and not e.is_synthetic
            and e.gold_score >= spec.threshold and e.num_sentences >= 2]


def permute_essay(essay: Essay, count: int = 10, seed: int = 0) -> list[PermutationRecord]:
    """``count`` seeded shuffles of the essay's sentences, identity redrawn.

    Short essays with fewer distinct non-identity orders than ``count`` repeat
    orders; repeats carry ``duplicate=True``.
    """
    n = essay.num_sentences
    if n < 2:
        raise ValueError(f"essay {essay.id}: cannot permute fewer than two sentences")
    rng = essay_rng(seed, essay.id)
    identity = tuple(range(n))
    seen: set[tuple[int, ...]] = set()
    records = []
    for index in range(1, count + 1):
        order = identity
        while order == identity:
            order = tuple(int(i) for i in rng.permutation(n))
        records.append(PermutationRecord(essay.id, index, order, order in seen))
        seen.add(order)
    return records


def materialize(origin: Essay, record: PermutationRecord) -> Essay:
    texts = [origin.sentence_texts[i] for i in record.sentence_order]
    return Essay(
        id=f"{origin.id}__p{record.permutation_index}",
        prompt_id=origin.prompt_id,
        raw_text=" ".join(texts),
        sentence_texts=texts,
        sentences=[list(origin.sentences[i]) for i in record.sentence_order],
        gold_score=origin.gold_score,
        coherence_label=0.0,
        is_synthetic=True,
        origin_id=origin.id,
        permutation_index=record.permutation_index,
    )


@dataclass
class SyntheticSplit:
    originals: list[Essay] = field(default_factory=list)
    records: list[PermutationRecord] = field(default_factory=list)  # all generated
    kept: list[PermutationRecord] = field(default_factory=list)     # the ones in this split

    @property
    def full_total(self) -> int:
        return len(self.originals) + len(self.records)

    def permutations(self) -> list[Essay]:
        by_id = {e.id: e for e in self.originals}
        return [materialize(by_id[r.origin_id], r) for r in self.kept]

    def essays(self) -> list[Essay]:
        """Selected originals (coherence 1) followed by kept permutations."""
        return list(self.originals) + self.permutations()


@dataclass
class SyntheticSet:
    splits: dict[str, SyntheticSplit] = field(default_factory=dict)

    def counts(self) -> dict[str, dict[str, int]]:
        return {name: {"selected": len(s.originals), "generated": len(s.records), "kept": len(s.kept),
                       "full_total": s.full_total}
                for name, s in self.splits.items()}


DEFAULT_KEEP = {"train": 4, "dev": None, "test": None}


def build_synthetic_set(folds: Mapping[str, Sequence[Essay]], specs: Mapping[int, PromptSpec], seed: int = 0,
                        count: int = 10, keep: Optional[Mapping[str, Optional[int]]] = None) -> SyntheticSet:
    """Permute the selected essays of every fold.

    ``keep[split]`` caps how many of each essay's permutations enter that split
    (``None`` keeps all); by default train keeps a seeded 4, dev and test all.
    """
    keep = {**DEFAULT_KEEP, **(keep or {})}
    out = SyntheticSet()
    for split, essays in folds.items():
        for pid in sorted({e.prompt_id for e in essays}):
            if pid not in specs:
                raise ValueError(f"no prompt spec for prompt {pid}")
        cap = keep.get(split)
        part = SyntheticSplit()
        for pid in sorted({e.prompt_id for e in essays}):
            for essay in select_high_scoring(essays, specs[pid]):
                records = permute_essay(essay, count, seed)
                part.originals.append(essay)
                part.records.extend(records)
                if cap is None or cap >= count:
                    part.kept.extend(records)
                else:
                    chosen = np.sort(essay_rng(seed, essay.id + "#subset").choice(count, size=cap, replace=False))
                    part.kept.extend(records[i] for i in chosen)
        out.splits[split] = part
    return out
