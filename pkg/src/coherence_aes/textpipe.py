"""Sentence splitting, tokenisation, vocabularies, embeddings and corpus I/O."""
from __future__ import annotations

import json
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .diffcore import Parameter

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

ABBREVIATIONS = frozenset(
    "mr mrs ms dr prof sr jr st mt vs etc e.g i.e inc ltd co corp dept gen gov sgt capt lt col "
    "no fig approx jan feb mar apr jun jul aug sep sept oct nov dec".split()
)

_BOUNDARY = re.compile(r"[.!?]+[\"')\]]*\s+(?=[\"'(\[]?[A-Z0-9@])")
_PUNCT = set(".,;:!?\"'()[]{}-`")


def split_sentences(raw_text: str) -> list[str]:
    """Rule-based splitter: terminal punctuation, then whitespace, then an
    uppercase letter or digit. Abbreviations and single-letter initials do not
    end a sentence."""
    if not any(ch.isalpha() for ch in raw_text):
        return []
    sentences, start = [], 0
    for match in _BOUNDARY.finditer(raw_text):
        head = raw_text[start:match.start()].split()
        last_word = head[-1].lower().rstrip(".") if head else ""
        if match.group().startswith(".") and (last_word in ABBREVIATIONS or (len(last_word) == 1 and last_word.isalpha())):
            continue
        end = match.end()
        piece = raw_text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = end
    tail = raw_text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def tokenize(sentence: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation into
    single-character tokens. Word-internal apostrophes stay put (``don't``)."""
    tokens: list[str] = []
    for chunk in sentence.lower().split():
        lead = 0
        while lead < len(chunk) and chunk[lead] in _PUNCT:
            lead += 1
        if lead == len(chunk):
            tokens.extend(chunk)
            continue
        trail = len(chunk)
        while chunk[trail - 1] in _PUNCT:
            trail -= 1
        tokens.extend(chunk[:lead])
        tokens.append(chunk[lead:trail])
        tokens.extend(chunk[trail:])
    return tokens


@dataclass
class Essay:
    id: str
    prompt_id: int
    raw_text: str
    sentence_texts: list[str]
    sentences: list[list[str]]
    gold_score: float
    coherence_label: float = 1.0
    is_synthetic: bool = False
    origin_id: Optional[str] = None
    permutation_index: Optional[int] = None

    def __post_init__(self):
        if self.is_synthetic != (self.origin_id is not None):
            raise ValueError(f"essay {self.id}: origin_id must be set exactly when is_synthetic")

    @classmethod
    def from_text(cls, id: str, prompt_id: int, text: str, score: float,
                  sentence_texts: Optional[Sequence[str]] = None, **extra) -> "Essay":
        texts = list(sentence_texts) if sentence_texts is not None else split_sentences(text)
        sentences = [tokenize(s) for s in texts]
        keep = [i for i, toks in enumerate(sentences) if toks]
        return cls(id, int(prompt_id), text, [texts[i] for i in keep], [sentences[i] for i in keep],
                   float(score), **extra)

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    def tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]

    def to_json(self) -> dict:
        row = {"id": self.id, "prompt": self.prompt_id, "text": self.raw_text, "score": self.gold_score,
               "sentences": self.sentence_texts}
        if self.is_synthetic:
            row.update(origin_id=self.origin_id, permutation_index=self.permutation_index,
                       coherence=self.coherence_label)
        return row

    @classmethod
    def from_json(cls, row: dict) -> "Essay":
        synthetic = row.get("origin_id") is not None
        return cls.from_text(
            str(row["id"]), row["prompt"], row["text"], row["score"], row.get("sentences"),
            coherence_label=float(row.get("coherence", 0.0 if synthetic else 1.0)),
            is_synthetic=synthetic, origin_id=row.get("origin_id"),
            permutation_index=row.get("permutation_index"),
        )


def read_corpus(path) -> list[Essay]:
    with open(path, encoding="utf-8") as fh:
        return [Essay.from_json(json.loads(line)) for line in fh if line.strip()]


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a sibling temp file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, rows: Iterable[dict]) -> None:
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)
    atomic_write_bytes(path, text.encode("utf-8"))


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_corpus(path, essays: Iterable[Essay]) -> None:
    write_jsonl(path, (e.to_json() for e in essays))


class Vocab:
    """Token <-> id map. Ids 0 and 1 are reserved for padding and UNK."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = [PAD, UNK]
        self.stoi: dict[str, int] = {PAD: PAD_ID, UNK: UNK_ID}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi and self.stoi[token] > UNK_ID

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def encode_essay(self, essay: Essay) -> list[list[int]]:
        return [self.encode(s) for s in essay.sentences]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if list(itos[:2]) != [PAD, UNK]:
            raise ValueError("serialised vocab must start with the reserved pad/unk entries")
        return cls(itos[2:])


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 2) -> Vocab:
    """Vocabulary over a training corpus given as token sequences.

    Tokens seen fewer than ``min_count`` times get no id and resolve to UNK.
    """
    counts: Counter[str] = Counter()
    seen_any = False
    for seq in corpus:
        seen_any = True
        counts.update(seq)
    if not seen_any or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, n in counts.items() if n >= min_count and t not in (PAD, UNK)),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept)


def essay_token_stream(essays: Iterable[Essay]) -> Iterator[list[str]]:
    for e in essays:
        yield e.tokens()


class EmbeddingFormatError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    vocab: Vocab
    weight: Parameter
    trainable: bool = True

    def __post_init__(self):
        if self.weight.shape[0] != len(self.vocab) or self.weight.data.ndim != 2 or self.weight.shape[1] < 1:
            raise ValueError("embedding matrix must be |vocab| x k with k > 0")

    @property
    def k(self) -> int:
        return self.weight.shape[1]

    def row(self, token: str) -> np.ndarray:
        return self.weight.data[self.vocab.lookup(token)]

    def parameters(self) -> list[Parameter]:
        return [self.weight] if self.trainable else []

    def copy(self, name: Optional[str] = None) -> "EmbeddingTable":
        return EmbeddingTable(self.vocab, Parameter(self.weight.data, name or self.weight.name), self.trainable)


def random_embeddings(vocab: Vocab, k: int, rng: np.random.Generator, scale: float = 0.05,
                      name: str = "embedding") -> EmbeddingTable:
    matrix = rng.uniform(-scale, scale, (len(vocab), k))
    matrix[PAD_ID] = 0.0
    return EmbeddingTable(vocab, Parameter(matrix, name))


def load_embeddings(path, vocab: Vocab, rng: np.random.Generator, scale: float = 0.05,
                    name: str = "embedding") -> EmbeddingTable:
    """Read a word2vec-style text file (optional ``count dim`` header line).

    Vocabulary tokens found in the file take its vectors; the rest, UNK
    included, keep a uniform draw in ``[-scale, scale]``.
    """
    vectors: dict[str, np.ndarray] = {}
    k = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            fields = line.rstrip("\n").split()
            if not fields:
                continue
            if lineno == 0 and len(fields) == 2 and all(f.isdigit() for f in fields):
                k = int(fields[1])
                continue
            try:
                vec = np.array([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno + 1}: {exc}") from None
            if k is None:
                k = len(vec)
            if len(vec) != k or k == 0:
                raise EmbeddingFormatError(f"line {lineno + 1}: expected {k} values, got {len(vec)}")
            vectors.setdefault(fields[0], vec)
    if k is None:
        raise EmbeddingFormatError(f"{path}: no vectors")
    table = random_embeddings(vocab, k, rng, scale, name)
    lowered = {}
    for tok, vec in vectors.items():
        lowered.setdefault(tok.lower(), vec)
    for idx, tok in enumerate(vocab.itos[2:], start=2):
        vec = vectors.get(tok)
        if vec is None:
            vec = lowered.get(tok)
        if vec is not None:
            table.weight.data[idx] = vec
    return table
