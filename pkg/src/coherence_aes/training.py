"""Epoch loop shared by every trainable model: seeded shuffling, RMSProp,
global-norm clipping and best-on-dev checkpoint selection."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .diffcore import Parameter, RmsPropState, Tensor, clip_grad_norm, rmsprop_step, zero_grads

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 60
    batch_size: int = 16
    seed: int = 1234
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-6
    clip_norm: float = 10.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RngStreams:
    """Independent generators for init, data order and dropout, all from one seed."""

    init: np.random.Generator
    shuffle: np.random.Generator
    dropout: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        a, b, c = np.random.SeedSequence(seed).spawn(3)
        return cls(np.random.default_rng(a), np.random.default_rng(b), np.random.default_rng(c))


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    selected_epoch: int = 0
    selection_metric: str = ""
    best_value: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def dedupe(params: Sequence[Parameter]) -> list[Parameter]:
    seen, out = set(), []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    return out


def _rank_value(value) -> float:
    return -np.inf if value is None or np.isnan(value) else float(value)


def fit(
    params: Sequence[Parameter],
    n_train: int,
    batch_loss: Callable[[np.ndarray, np.random.Generator], Tensor],
    evaluate: Callable[[], dict],
    select: str,
    cfg: TrainConfig,
    rngs: RngStreams,
    tiebreak: Sequence[str] = (),
) -> TrainLog:
    """Train in place and leave ``params`` at the best dev checkpoint.

    ``batch_loss(indices, dropout_rng)`` returns the mean loss of one batch.
    ``evaluate()`` returns dev metrics; ``select`` names the one to maximise.
    Ties are broken by the ``tiebreak`` metrics in order (missing or NaN
    values rank lowest), then in favour of the later epoch. With zero epochs
    the initial parameters are kept.
    """
    if n_train == 0:
        raise ValueError("empty training set")
    params = dedupe(params)
    state = RmsPropState(cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon)
    tlog = TrainLog(selection_metric=select)
    best = best_key = None
    zero_grads(params)
    for epoch in range(1, cfg.epochs + 1):
        order = rngs.shuffle.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = batch_loss(idx, rngs.dropout)
            if loss.requires_grad:
                loss.backward()
            clip_grad_norm(params, cfg.clip_norm)
            rmsprop_step(params, state)
            losses.append(loss.item() * len(idx))
        metrics = evaluate()
        record = {"epoch": epoch, "train_loss": float(np.sum(losses) / n_train), **metrics}
        tlog.epochs.append(record)
        log.info("epoch %d %s", epoch, record)
        key = tuple(_rank_value(metrics.get(name)) for name in (select, *tiebreak))
        if best is None or key >= best_key:
            best_key = key
            tlog.best_value = float(metrics[select])
            tlog.selected_epoch = epoch
            best = [p.data.copy() for p in params]
    if best is not None:
        for p, data in zip(params, best):
            p.data[...] = data
    return tlog
