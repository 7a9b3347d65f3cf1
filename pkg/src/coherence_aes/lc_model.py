"""Local coherence network.

Each sentence is encoded by a shared LSTM (state reset per sentence, final
hidden state kept). Windows of ``m`` consecutive sentence vectors are
concatenated, mapped through the clique filter and ``tanh``, and scored with
a sigmoid. A document's coherence is the mean (or, for the multiplicative
baseline, the product) of its clique scores.

Essays shorter than the window get a single clique over all their sentences,
using the leading ``N * d_lstm`` rows of the flattened filter.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .diffcore import LstmParams, Parameter, ShapeError, Tensor, lstm_sequence, ops, pad_batch
from .metrics import RankedPool, pra, tpra
from .textpipe import PAD_ID, EmbeddingTable, Essay, Vocab, random_embeddings
from .training import RngStreams, TrainConfig, TrainLog, fit


@dataclass
class LcConfig:
    embedding_dim: int = 50
    hidden_size: int = 100
    cnn_size: int = 100
    window: int = 3
    dropout: float = 0.3
    init_scale: float = 0.05
    aggregation: str = "mean"  # or "product" for the multiplicative baseline

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.aggregation not in ("mean", "product"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LcOutput:
    logits: Tensor            # (C,)
    cliques: Tensor           # (C, d_cnn) after tanh (and dropout when training)
    clique_essay: np.ndarray  # (C,) index of the owning essay in the batch
    n_cliques: np.ndarray     # (B,)

    def scores(self) -> np.ndarray:
        return ops.stable_sigmoid(self.logits.data)

    def per_essay(self, values: np.ndarray) -> list[np.ndarray]:
        return [values[self.clique_essay == b] for b in range(len(self.n_cliques))]


class LcModel:
    def __init__(self, embedding: EmbeddingTable, lstm: LstmParams, clique_filter: Parameter,
                 score_vector: Parameter, config: LcConfig):
        m, d, dc = clique_filter.shape
        if m != config.window or d != lstm.hidden_size or score_vector.shape != (dc,):
            raise ShapeError("clique filter must be (window, d_lstm, d_cnn) and V (d_cnn,)")
        self.embedding = embedding
        self.lstm = lstm
        self.clique_filter = clique_filter
        self.score_vector = score_vector
        self.config = config

    @classmethod
    def init(cls, vocab: Vocab, config: LcConfig, rng: np.random.Generator,
             embedding: Optional[EmbeddingTable] = None, prefix: str = "lc") -> "LcModel":
        if embedding is None:
            embedding = random_embeddings(vocab, config.embedding_dim, rng, config.init_scale)
        s, d, dc = config.init_scale, config.hidden_size, config.cnn_size
        lstm = LstmParams.init(embedding.k, d, rng, s, prefix=f"{prefix}.lstm")
        W = Parameter(rng.uniform(-s, s, (config.window, d, dc)), f"{prefix}.clique_filter")
        V = Parameter(rng.uniform(-s, s, dc), f"{prefix}.score_vector")
        return cls(embedding, lstm, W, V, config)

    @property
    def vocab(self) -> Vocab:
        return self.embedding.vocab

    def branch_parameters(self) -> list[Parameter]:
        return self.lstm.parameters() + [self.clique_filter, self.score_vector]

    def parameters(self) -> list[Parameter]:
        return self.embedding.parameters() + self.branch_parameters()

    def encode(self, essay: Essay) -> list[list[int]]:
        ids = self.vocab.encode_essay(essay)
        if not ids:
            raise ValueError(f"essay {essay.id} has no sentences")
        return ids

    def sentence_reprs(self, sentences: Sequence[Sequence[int]]) -> Tensor:
        """Final LSTM hidden state of every sentence, ``(S, d_lstm)``."""
        ids, lengths = pad_batch(sentences, PAD_ID)
        H = lstm_sequence(ops.take_rows(self.embedding.weight, ids), self.lstm)
        S, T = ids.shape
        flat = ops.reshape(H, (S * T, self.lstm.hidden_size))
        return ops.take_rows(flat, np.arange(S) * T + lengths - 1)

    def forward(self, batch: Sequence[Sequence[Sequence[int]]], training: bool = False,
                rng: Optional[np.random.Generator] = None) -> LcOutput:
        m, d = self.config.window, self.lstm.hidden_size
        sentences = [s for essay in batch for s in essay]
        snt = self.sentence_reprs(sentences)
        W = ops.reshape(self.clique_filter, (m * d, self.config.cnn_size))

        groups: dict[int, tuple[list, list]] = {}
        offset = 0
        n_cliques = np.zeros(len(batch), dtype=np.int64)
        for b, essay in enumerate(batch):
            N = len(essay)
            if N == 0:
                raise ValueError("essay without sentences")
            width = min(N, m)
            rows, owners = groups.setdefault(width, ([], []))
            for j in range(N - width + 1):
                rows.append(range(offset + j, offset + j + width))
                owners.append(b)
            n_cliques[b] = N - width + 1
            offset += N

        blocks, owner_list = [], []
        for width in sorted(groups, reverse=True):
            rows, owners = groups[width]
            idx = np.array([list(r) for r in rows], dtype=np.int64)
            gathered = ops.reshape(ops.take_rows(snt, idx.ravel()), (len(rows), width * d))
            filt = W if width == m else ops.slice_rows(W, width * d)
            blocks.append(ops.tanh(ops.matmul(gathered, filt)))
            owner_list.extend(owners)
        cliques = blocks[0] if len(blocks) == 1 else ops.concat(blocks, axis=0)
        cliques = ops.dropout(cliques, self.config.dropout, rng, training)
        logits = ops.matmul(cliques, self.score_vector)
        return LcOutput(logits, cliques, np.array(owner_list, dtype=np.int64), n_cliques)

    def batch_loss(self, batch, golds: Sequence[float], training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
        """Mean over essays of the per-essay mean clique cross-entropy."""
        out = self.forward(batch, training, rng)
        golds = np.asarray(golds, dtype=np.float64)
        targets = golds[out.clique_essay]
        weights = 1.0 / (out.n_cliques[out.clique_essay] * len(batch))
        return ops.bce_with_logits(out.logits, targets, weights)

    def clique_scores(self, essays: Sequence[Essay], batch_size: int = 64) -> list[np.ndarray]:
        out = []
        for start in range(0, len(essays), batch_size):
            res = self.forward([self.encode(e) for e in essays[start:start + batch_size]])
            out.extend(res.per_essay(res.scores()))
        return out

    def clique_representations(self, essay: Essay) -> np.ndarray:
        return self.forward([self.encode(essay)]).cliques.data

    def coherence(self, essays: Sequence[Essay]) -> np.ndarray:
        agg = coherence_score if self.config.aggregation == "mean" else coherence_score_mul
        return np.array([agg(s) for s in self.clique_scores(essays)])


def sentence_repr(sentence: Sequence[int], model: LcModel) -> np.ndarray:
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    return model.sentence_reprs([sentence]).data[0]


def clique_repr(sentence_vectors: Sequence[np.ndarray], model: LcModel, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``tanh([h_j; ...; h_{j+m-1}] @ W_clq)`` for exactly ``m`` sentence vectors."""
    m, d = model.config.window, model.lstm.hidden_size
    if len(sentence_vectors) != m:
        raise ShapeError(f"a clique needs exactly {m} sentence vectors, got {len(sentence_vectors)}")
    x = Tensor(np.concatenate(sentence_vectors))
    W = ops.reshape(model.clique_filter, (m * d, model.config.cnn_size))
    return ops.dropout(ops.tanh(ops.matmul(x, W)), model.config.dropout, rng, training).data


def clique_score(h_clq, V) -> float:
    h = h_clq if isinstance(h_clq, Tensor) else Tensor(h_clq)
    v = V if isinstance(V, Tensor) else Tensor(V)
    if h.shape != v.shape:
        raise ShapeError("clique representation and score vector differ in size")
    return ops.affine_sigmoid(h, v).item()


def _nonempty(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no cliques")
    return arr


def local_loss(predicted, gold: float) -> float:
    """Mean binary cross-entropy of clique probabilities against one gold label."""
    p = _nonempty(predicted)
    return float(np.mean(-(gold * np.log(p) + (1.0 - gold) * np.log(1.0 - p))))


def coherence_score(predicted) -> float:
    return float(np.mean(_nonempty(predicted)))


def coherence_score_mul(predicted) -> float:
    return float(np.prod(_nonempty(predicted)))


def clique_vector_max(clique_reprs) -> np.ndarray:
    arr = np.asarray(clique_reprs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need at least one clique representation")
    return arr.max(axis=0)


def ranking_pool(essays: Sequence[Essay], scores: Sequence[float]) -> RankedPool:
    """Originals and permutations of an evaluation set, keyed for PRA/TPRA."""
    pool = RankedPool()
    for e, s in zip(essays, scores):
        if e.is_synthetic:
            pool.permutations[e.id] = (e.origin_id, float(s))
        else:
            pool.originals[e.id] = float(s)
    return pool


def ranking_metrics(essays: Sequence[Essay], scores: Sequence[float]) -> dict:
    """Per-prompt PRA/TPRA, macro-averaged over prompts."""
    by_prompt: dict[int, tuple[list, list]] = {}
    for e, s in zip(essays, scores):
        es, ss = by_prompt.setdefault(e.prompt_id, ([], []))
        es.append(e)
        ss.append(s)
    pras, tpras = [], []
    for pid in sorted(by_prompt):
        pool = ranking_pool(*by_prompt[pid])
        if pool.permutations and pool.originals:
            pras.append(pra(pool))
            tpras.append(tpra(pool))
    if not pras:
        return {"pra": float("nan"), "tpra": float("nan")}
    return {"pra": float(np.mean(pras)), "tpra": float(np.mean(tpras))}


def train_lc(train: Sequence[Essay], dev: Sequence[Essay], model: LcModel, cfg: TrainConfig,
             rngs: RngStreams, labels: Optional[Mapping[str, float]] = None) -> TrainLog:
    """Fit ``model`` in place; keeps the epoch with the highest dev PRA.

    Gold labels default to each essay's coherence label (1 original, 0 permuted).
    """
    if not train:
        raise ValueError("empty training set")
    encoded = [model.encode(e) for e in train]
    golds = np.array([labels[e.id] if labels else e.coherence_label for e in train])

    def batch_loss(idx, rng):
        return model.batch_loss([encoded[i] for i in idx], golds[idx], training=True, rng=rng)

    def evaluate():
        return ranking_metrics(dev, model.coherence(dev))

    return fit(model.parameters(), len(train), batch_loss, evaluate, "pra", cfg, rngs)
