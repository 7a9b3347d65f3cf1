"""Essay scorer: one LSTM layer over the essay's words, mean over time, then
a sigmoid-bounded linear output."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .diffcore import LstmParams, Parameter, Tensor, lstm_sequence, ops, pad_batch
from .metrics import macro_average, qwk_from_scores
from .textpipe import PAD_ID, EmbeddingTable, Essay, Vocab, random_embeddings
from .training import RngStreams, TrainConfig, TrainLog, fit


@dataclass(frozen=True)
class ScoreScale:
    prompt_id: int
    min_score: float
    max_score: float

    def __post_init__(self):
        if not self.min_score < self.max_score:
            raise ValueError(f"prompt {self.prompt_id}: min must be below max")


def scale_score(raw: float, scale: ScoreScale) -> float:
    if not scale.min_score <= raw <= scale.max_score:
        raise ValueError(f"score {raw} outside [{scale.min_score}, {scale.max_score}]")
    return (raw - scale.min_score) / (scale.max_score - scale.min_score)


def unscale_score(value: float, scale: ScoreScale) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"scaled value {value} outside [0, 1]")
    return scale.min_score + value * (scale.max_score - scale.min_score)


def aes_loss(predicted: float, gold_scaled: float) -> float:
    return (predicted - gold_scaled) ** 2


@dataclass
class AesConfig:
    embedding_dim: int = 50
    hidden_size: int = 100
    init_scale: float = 0.05
    output_bias: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


class AesModel:
    def __init__(self, embedding: EmbeddingTable, lstm: LstmParams, score_weights: Parameter,
                 score_bias: Optional[Parameter], config: AesConfig):
        self.embedding = embedding
        self.lstm = lstm
        self.score_weights = score_weights
        self.score_bias = score_bias
        self.config = config

    @classmethod
    def init(cls, vocab: Vocab, config: AesConfig, rng: np.random.Generator,
             embedding: Optional[EmbeddingTable] = None, prefix: str = "aes") -> "AesModel":
        if embedding is None:
            embedding = random_embeddings(vocab, config.embedding_dim, rng, config.init_scale)
        s = config.init_scale
        lstm = LstmParams.init(embedding.k, config.hidden_size, rng, s, prefix=f"{prefix}.lstm")
        w = Parameter(rng.uniform(-s, s, config.hidden_size), f"{prefix}.score_weights")
        b = Parameter(np.array(0.0), f"{prefix}.score_bias") if config.output_bias else None
        return cls(embedding, lstm, w, b, config)

    @property
    def vocab(self) -> Vocab:
        return self.embedding.vocab

    def branch_parameters(self) -> list[Parameter]:
        out = self.lstm.parameters() + [self.score_weights]
        return out + ([self.score_bias] if self.score_bias is not None else [])

    def parameters(self) -> list[Parameter]:
        return self.embedding.parameters() + self.branch_parameters()

    def encode(self, essay: Essay) -> list[int]:
        ids = self.vocab.encode(essay.tokens())
        if not ids:
            raise ValueError(f"essay {essay.id} has no tokens")
        return ids

    def forward(self, batch: Sequence[Sequence[int]]) -> tuple[Tensor, Tensor]:
        """Return ``(essay representations (B, d), scaled scores (B,))``."""
        ids, lengths = pad_batch(batch, PAD_ID)
        X = ops.take_rows(self.embedding.weight, ids)
        H = lstm_sequence(X, self.lstm)
        reprs = ops.masked_mean_over_time(H, lengths)
        return reprs, ops.affine_sigmoid(reprs, self.score_weights, self.score_bias)

    def predict(self, essays: Sequence[Essay], batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
        reprs, scores = [], []
        for start in range(0, len(essays), batch_size):
            r, s = self.forward([self.encode(e) for e in essays[start:start + batch_size]])
            reprs.append(r.data)
            scores.append(s.data)
        if not reprs:
            return np.zeros((0, self.config.hidden_size)), np.zeros(0)
        return np.concatenate(reprs), np.concatenate(scores)


def essay_repr(essay: Essay, model: AesModel) -> np.ndarray:
    return model.forward([model.encode(essay)])[0].data[0]


def essay_score(essay: Essay, model: AesModel) -> float:
    return float(model.forward([model.encode(essay)])[1].data[0])


def dev_qwk(model: AesModel, essays: Sequence[Essay], scales: Mapping[int, ScoreScale],
            scores: Optional[np.ndarray] = None) -> float:
    """Macro-averaged per-prompt QWK of unscaled, rounded predictions."""
    if scores is None:
        _, scores = model.predict(essays)
    per_prompt = []
    for pid in sorted({e.prompt_id for e in essays}):
        sc = scales[pid]
        rows = [(e.gold_score, unscale_score(float(s), sc)) for e, s in zip(essays, scores) if e.prompt_id == pid]
        per_prompt.append(qwk_from_scores([g for g, _ in rows], [p for _, p in rows],
                                          (int(sc.min_score), int(sc.max_score))))
    return macro_average(per_prompt)


def train_aes(train: Sequence[Essay], dev: Sequence[Essay], scales: Mapping[int, ScoreScale],
              model: AesModel, cfg: TrainConfig, rngs: RngStreams) -> TrainLog:
    """Fit ``model`` in place on squared error; keeps the best dev-QWK epoch."""
    if not train:
        raise ValueError("empty training set")
    encoded = [model.encode(e) for e in train]
    gold = np.array([scale_score(e.gold_score, scales[e.prompt_id]) for e in train])

    def batch_loss(idx, _rng):
        _, pred = model.forward([encoded[i] for i in idx])
        return ops.weighted_squared_error(pred, gold[idx], np.full(len(idx), 1.0 / len(idx)))

    return fit(model.parameters(), len(train), batch_loss,
               lambda: {"qwk": dev_qwk(model, dev, scales)}, "qwk", cfg, rngs)
