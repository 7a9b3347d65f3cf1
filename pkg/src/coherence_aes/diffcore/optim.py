from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Parameter


@dataclass
class RmsPropState:
    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-6
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: Sequence[Parameter], state: RmsPropState) -> None:
    """In-place RMSProp update, then zero every gradient.

    acc <- decay*acc + (1-decay)*g^2;  p <- p - lr*g/sqrt(acc + eps)
    """
    for p in params:
        acc = state.accumulators.get(p.name)
        if acc is None:
            acc = state.accumulators[p.name] = np.zeros_like(p.data)
        g = p.grad
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        if state.learning_rate != 0.0:
            p.data -= state.learning_rate * g / np.sqrt(acc + state.epsilon)
        p.grad = np.zeros_like(p.data)


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


def global_grad_norm(params: Sequence[Parameter]) -> float:
    return float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float | None) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm
