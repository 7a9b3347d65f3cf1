"""Joint scorer: the AES and LC branches trained together over one (or, for the
ablation, two identically initialised) embedding tables, plus the
score-difference detector for permuted input."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .aes_model import AesConfig, AesModel, ScoreScale, dev_qwk, scale_score, unscale_score
from .diffcore import Parameter, Tensor, ops
from .lc_model import LcConfig, LcModel, local_loss, ranking_metrics
from .textpipe import EmbeddingTable, Essay, Vocab, random_embeddings
from .training import RngStreams, TrainConfig, TrainLog, dedupe, fit

STRATEGIES = ("main", "zero_score")


@dataclass
class JointConfig:
    aes: AesConfig = field(default_factory=AesConfig)
    lc: LcConfig = field(default_factory=LcConfig)
    share_embeddings: bool = True
    strategy: str = "main"
    lambda_aes: float = 1.0
    lambda_lc: float = 1.0
    per_prompt_threshold: bool = False

    def __post_init__(self):
        if self.aes.embedding_dim != self.lc.embedding_dim:
            raise ValueError("both branches must use the same embedding size")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown gold strategy {self.strategy!r}")
        if self.lambda_aes < 0 or self.lambda_lc < 0:
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "JointConfig":
        d = dict(d)
        return cls(aes=AesConfig(**d.pop("aes")), lc=LcConfig(**d.pop("lc")), **d)


class JointModel:
    def __init__(self, aes: AesModel, lc: LcModel, config: JointConfig):
        if config.share_embeddings != (aes.embedding is lc.embedding):
            raise ValueError("embedding sharing does not match the config flag")
        self.aes = aes
        self.lc = lc
        self.config = config

    @classmethod
    def init(cls, vocab: Vocab, config: JointConfig, rng: np.random.Generator,
             embedding: Optional[EmbeddingTable] = None) -> "JointModel":
        # Draw order (embedding, AES branch, LC branch) keeps the AES part
        # identical to a standalone AesModel built from the same generator.
        emb = embedding or random_embeddings(vocab, config.aes.embedding_dim, rng, config.aes.init_scale)
        aes = AesModel.init(vocab, config.aes, rng, embedding=emb)
        lc_emb = emb if config.share_embeddings else emb.copy("lc.embedding")
        lc = LcModel.init(vocab, config.lc, rng, embedding=lc_emb)
        return cls(aes, lc, config)

    @property
    def vocab(self) -> Vocab:
        return self.aes.vocab

    @property
    def shared_embedding(self):
        return self.aes.embedding

    def embedding_tables(self) -> list:
        return [self.aes.embedding] if self.config.share_embeddings else [self.aes.embedding, self.lc.embedding]

    def parameters(self) -> list[Parameter]:
        return dedupe(self.aes.parameters() + self.lc.parameters())

    def batch_loss(self, aes_ids, lc_ids, essay_golds, coherence_golds, training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
        """Batch mean of ``lambda_aes * squared error + lambda_lc * clique BCE``.

        A branch whose weight is zero is not evaluated at all.
        """
        cfg = self.config
        n = len(aes_ids)
        terms = []
        if cfg.lambda_aes > 0:
            _, pred = self.aes.forward(aes_ids)
            terms.append(ops.weighted_squared_error(pred, essay_golds, np.full(n, cfg.lambda_aes / n)))
        if cfg.lambda_lc > 0:
            terms.append(ops.scale(self.lc.batch_loss(lc_ids, coherence_golds, training, rng), cfg.lambda_lc))
        if not terms:
            return Tensor(np.array(0.0))
        return terms[0] if len(terms) == 1 else ops.add(terms[0], terms[1])

    def predict(self, essays: Sequence[Essay]) -> tuple[np.ndarray, np.ndarray]:
        """Scaled essay scores and coherence scores."""
        _, scores = self.aes.predict(essays)
        return scores, self.lc.coherence(essays)


@dataclass(frozen=True)
class GoldAssignment:
    essay_gold_scaled: float
    coherence_gold: float


def assign_gold(essay: Essay, strategy: str, scales: Mapping[int, ScoreScale],
                originals: Optional[Mapping[str, Essay]] = None) -> GoldAssignment:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown gold strategy {strategy!r}")
    if not essay.is_synthetic:
        g = scale_score(essay.gold_score, scales[essay.prompt_id])
        return GoldAssignment(g, g)
    if originals is None or essay.origin_id not in originals:
        raise KeyError(f"essay {essay.id}: origin {essay.origin_id!r} not found")
    if strategy == "zero_score":
        return GoldAssignment(0.0, 0.0)
    origin = originals[essay.origin_id]
    return GoldAssignment(scale_score(origin.gold_score, scales[origin.prompt_id]), 0.0)


def joint_loss(essay: Essay, gold: GoldAssignment, model: JointModel) -> float:
    cfg = model.config
    _, scores = model.aes.forward([model.aes.encode(essay)])
    cliques = model.lc.forward([model.lc.encode(essay)]).scores()
    return (cfg.lambda_aes * (float(scores.data[0]) - gold.essay_gold_scaled) ** 2
            + cfg.lambda_lc * local_loss(cliques, gold.coherence_gold))


@dataclass
class DetectionThreshold:
    value: float
    M: int
    per_prompt: Optional[dict[int, float]] = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("threshold needs at least one synthetic essay")

    def for_prompt(self, prompt_id: int) -> float:
        if self.per_prompt is not None and prompt_id in self.per_prompt:
            return self.per_prompt[prompt_id]
        return self.value

    def to_dict(self) -> dict:
        per = None if self.per_prompt is None else {str(k): v for k, v in sorted(self.per_prompt.items())}
        return {"value": self.value, "M": self.M, "per_prompt": per}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DetectionThreshold":
        per = d.get("per_prompt")
        return cls(float(d["value"]), int(d["M"]), None if per is None else {int(k): float(v) for k, v in per.items()})


def compute_threshold(essay_scores, coherence_scores, prompt_ids=None,
                      per_prompt: bool = False) -> DetectionThreshold:
    """Mean of (essay score - coherence score) over the synthetic dev essays."""
    diffs = np.asarray(essay_scores, dtype=np.float64) - np.asarray(coherence_scores, dtype=np.float64)
    if diffs.size == 0:
        raise ValueError("threshold needs at least one synthetic essay")
    per = None
    if per_prompt:
        if prompt_ids is None:
            raise ValueError("per-prompt thresholds need prompt ids")
        pids = np.asarray(prompt_ids)
        per = {int(p): float(diffs[pids == p].mean()) for p in np.unique(pids)}
    return DetectionThreshold(float(diffs.mean()), int(diffs.size), per)


@dataclass(frozen=True)
class FinalPrediction:
    essay_score_unscaled: float
    coherence_score: float
    flagged: bool
    final_score: float


def detect_adversarial(essay_scaled: float, coherence: float, threshold: float,
                       scale: ScoreScale) -> FinalPrediction:
    flagged = bool(essay_scaled - coherence > threshold)
    raw = unscale_score(float(np.clip(essay_scaled, 0.0, 1.0)), scale)
    return FinalPrediction(raw, float(coherence), flagged, 0.0 if flagged else raw)


def prediction_rows(model: JointModel, essays: Sequence[Essay], threshold: DetectionThreshold,
                    scales: Mapping[int, ScoreScale]) -> list[dict]:
    esy, coh = model.predict(essays)
    rows = []
    for e, s, c in zip(essays, esy, coh):
        fp = detect_adversarial(float(s), float(c), threshold.for_prompt(e.prompt_id), scales[e.prompt_id])
        rows.append({"id": e.id, "prompt": e.prompt_id, "gold": e.gold_score, "essay_scaled": float(s),
                     "essay_score": fp.essay_score_unscaled, "coherence": fp.coherence_score,
                     "flagged": fp.flagged, "final": fp.final_score, "is_synthetic": e.is_synthetic,
                     "origin_id": e.origin_id})
    return rows


@dataclass
class JointResult:
    log: TrainLog
    threshold: Optional[DetectionThreshold]


def train_joint(asap_train: Sequence[Essay], synthetic_train: Sequence[Essay], asap_dev: Sequence[Essay],
                synthetic_dev: Sequence[Essay], scales: Mapping[int, ScoreScale], model: JointModel,
                cfg: TrainConfig, rngs: RngStreams) -> JointResult:
    """Fit on the shuffled union of ASAP and permuted essays.

    Checkpoints are chosen by ASAP dev QWK, ties going to the better dev
    PRA, then TPRA, then the later epoch; the detection threshold is then
    measured on the synthetic dev essays. Originals already present in the
    ASAP training set are not added twice.
    """
    if not asap_train:
        raise ValueError("empty ASAP training set")
    jc = model.config
    if not synthetic_train and jc.lambda_lc > 0:
        raise ValueError("empty synthetic training set")
    seen = {e.id for e in asap_train}
    train = list(asap_train) + [e for e in synthetic_train if e.id not in seen]
    lookup = {e.id: e for e in train if not e.is_synthetic}
    golds = [assign_gold(e, jc.strategy, scales, lookup) for e in train]
    essay_gold = np.array([g.essay_gold_scaled for g in golds])
    coh_gold = np.array([g.coherence_gold for g in golds])
    aes_ids = [model.aes.encode(e) for e in train]
    lc_ids = [model.lc.encode(e) for e in train] if jc.lambda_lc > 0 else None

    def batch_loss(idx, rng):
        lc_batch = [lc_ids[i] for i in idx] if lc_ids is not None else None
        return model.batch_loss([aes_ids[i] for i in idx], lc_batch, essay_gold[idx], coh_gold[idx],
                                training=True, rng=rng)

    def evaluate():
        out = {"qwk": dev_qwk(model.aes, asap_dev, scales)}
        if synthetic_dev:
            out.update(ranking_metrics(synthetic_dev, model.lc.coherence(synthetic_dev)))
        return out

    tlog = fit(model.parameters(), len(train), batch_loss, evaluate, "qwk", cfg, rngs, tiebreak=("pra", "tpra"))
    threshold = None
    if synthetic_dev:
        esy, coh = model.predict(synthetic_dev)
        threshold = compute_threshold(esy, coh, [e.prompt_id for e in synthetic_dev], jc.per_prompt_threshold)
    return JointResult(tlog, threshold)
