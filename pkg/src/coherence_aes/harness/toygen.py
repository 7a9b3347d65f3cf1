"""Desk-scale stand-ins for ASAP with signals a small model can learn.

coherence  chained sentences: each closes on the ordinal word the next one
           opens with, counting up from a random start, so a shuffle
           leaves most adjacent pairs unlinked.
scoring    fixed-length essays whose score is the number of "quality"
           adjectives they contain.
joint      both at once: chained sentences whose adjective slots carry the
           score (the quality-token count), with the top score permuted
           into adversarial copies.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..synthdata import PromptSpec, build_synthetic_set, dump_prompt_specs
from ..textpipe import Essay, atomic_write_bytes, write_corpus

ORDINALS = ("one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen "
            "sixteen seventeen eighteen").split()
VERBS = "meets follows reaches watches guides finds carries greets".split()
NEUTRAL_ADJ = "quiet old small distant gentle hidden busy plain".split()
QUALITY_ADJ = "brilliant eloquent vivid insightful compelling precise".split()
SUBJECTS = "the writer|my friend|the teacher|our class|the author".split("|")
NOUNS = "story idea letter plan argument essay".split()

KINDS = ("coherence", "scoring", "joint")
JOINT_SENTENCES = 12
SPLIT_FRACTIONS = (("train", 0.6), ("dev", 0.2), ("test", 0.2))


def coherence_essay(rng: np.random.Generator, eid: str, n_sentences: int, score: float,
                    adjectives: Optional[list[str]] = None, prompt_id: int = 1) -> Essay:
    if not 2 <= n_sentences < len(ORDINALS):
        raise ValueError(f"between 2 and {len(ORDINALS) - 1} sentences supported")
    start = int(rng.integers(0, len(ORDINALS) - n_sentences))
    if adjectives is None:
        adjectives = [NEUTRAL_ADJ[i] for i in rng.integers(0, len(NEUTRAL_ADJ), n_sentences)]
    texts = []
    for i in range(n_sentences):
        verb = VERBS[rng.integers(len(VERBS))]
        first, last = ORDINALS[start + i], ORDINALS[start + i + 1]
        texts.append(f"{first.capitalize()} {verb} the {adjectives[i]} {last}.")
    return Essay.from_text(eid, prompt_id, " ".join(texts), score, texts)


def scoring_essay(rng: np.random.Generator, eid: str, score: int, n_sentences: int = 5,
                  prompt_id: int = 1) -> Essay:
    slots = 2 * n_sentences
    quality = set(rng.choice(slots, score, replace=False).tolist())
    adjs = [QUALITY_ADJ[rng.integers(len(QUALITY_ADJ))] if s in quality else NEUTRAL_ADJ[rng.integers(len(NEUTRAL_ADJ))]
            for s in range(slots)]
    texts = []
    for i in range(n_sentences):
        subj = SUBJECTS[rng.integers(len(SUBJECTS))]
        verb = VERBS[rng.integers(len(VERBS))]
        n1, n2 = (NOUNS[j] for j in rng.integers(0, len(NOUNS), 2))
        texts.append(f"{subj.capitalize()} {verb} the {adjs[2 * i]} {n1} and {adjs[2 * i + 1]} {n2}.")
    return Essay.from_text(eid, prompt_id, " ".join(texts), float(score), texts)


def quality_count(essay: Essay) -> int:
    return sum(tok in QUALITY_ADJ for tok in essay.tokens())


def broken_steps(order) -> int:
    """Adjacent pairs in ``order`` that are not consecutive ordinals."""
    return sum(1 for a, b in zip(order, order[1:]) if b != a + 1)


def generate(kind: str, size: int, seed: int) -> tuple[dict[str, list[Essay]], dict[int, PromptSpec]]:
    if kind not in KINDS:
        raise ValueError(f"unknown toy corpus kind {kind!r}")
    if size < 20:
        raise ValueError("toy corpora need at least 20 essays")
    rng = np.random.default_rng(seed)
    essays = []
    if kind == "coherence":
        spec = PromptSpec(1, 0, 4, 4)
        for i in range(size):
            essays.append(coherence_essay(rng, f"coh{i:04d}", int(rng.integers(4, 9)), 4.0))
    elif kind == "scoring":
        spec = PromptSpec(1, 0, 6, 6)
        for i in range(size):
            essays.append(scoring_essay(rng, f"sco{i:04d}", int(rng.integers(0, 7))))
    else:
        # long essays keep the share of intact sentence windows in a
        # shuffled copy small, which tightens the detector's margin
        spec = PromptSpec(1, 0, 6, 6)
        n = JOINT_SENTENCES
        for i in range(size):
            score = 6 if rng.random() < 0.3 else int(rng.integers(0, 6))
            quality = set(rng.choice(n, score, replace=False).tolist())
            adjs = [QUALITY_ADJ[rng.integers(len(QUALITY_ADJ))] if s in quality
                    else NEUTRAL_ADJ[rng.integers(len(NEUTRAL_ADJ))] for s in range(n)]
            essays.append(coherence_essay(rng, f"jnt{i:04d}", n, float(score), adjs))
    order = rng.permutation(size)
    folds, start = {}, 0
    for name, frac in SPLIT_FRACTIONS:
        stop = size if name == "test" else start + int(round(frac * size))
        folds[name] = [essays[i] for i in sorted(order[start:stop])]
        start = stop
    return folds, {1: spec}


def write_toy_corpus(kind: str, size: int, seed: int, out_dir) -> dict:
    """Write ``{split}.jsonl`` originals, ``{split}.synthetic.jsonl`` (coherence
    and joint kinds) and ``prompts.json`` into ``out_dir``; returns counts."""
    out = Path(out_dir)
    folds, specs = generate(kind, size, seed)
    atomic_write_bytes(out / "prompts.json", dump_prompt_specs(specs).encode())
    counts = {}
    for name, essays in folds.items():
        write_corpus(out / f"{name}.jsonl", essays)
        counts[name] = len(essays)
    if kind != "scoring":
        synth = build_synthetic_set(folds, specs, seed)
        for name, part in synth.splits.items():
            write_corpus(out / f"{name}.synthetic.jsonl", part.essays())
        counts["synthetic"] = synth.counts()
    return counts
