from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .optim import zero_grads
from .tensor import Parameter, Tensor


def grad_check(f: Callable[[], Tensor], params: Sequence[Parameter], step: float = 1e-5) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``f`` must rebuild the graph on each call and be deterministic (no dropout).
    The error for one entry is ``|a - n| / max(1, |a|, |n|)``.
    """
    zero_grads(params)
    out = f()
    out.backward()
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, analytic):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite analytic gradient for {p.name}")
    zero_grads(params)

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            if not np.isfinite(numeric):
                raise FloatingPointError(f"non-finite numeric gradient for {p.name}[{i}]")
            a = gflat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
