"""Differentiable primitives used by the coherence and scoring networks.

Broadcasting is deliberately narrow: operands match exactly, except that a
1-D vector may be added along the last axis (a bias).
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, make_result


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return make_result(a.data + b.data, (a, b), lambda g: (g, g))
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.data.ndim - 1))
        return make_result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=lead)))
    if b.data.ndim == 0:
        return make_result(a.data + b.data, (a, b), lambda g: (g, np.asarray(g.sum())))
    raise ShapeError(f"add: cannot combine {a.shape} with {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return make_result(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2:  # (n,k) @ (k,) -> (n,)
            return np.outer(g, bd), ad.T @ g
        if bd.ndim == 2:  # (k,) @ (k,m) -> (m,)
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    return make_result(ad @ bd, (a, b), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("dot expects vectors")
    _check_same(a, b, "dot")
    return matmul(a, b)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_result(y, (a,), lambda g: (g * (1.0 - y * y),))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = stable_sigmoid(a.data)
    return make_result(y, (a,), lambda g: (g * y * (1.0 - y),))


def total(a: Tensor) -> Tensor:
    shape = a.shape
    return make_result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    orig = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def take_rows(a: Tensor, index) -> Tensor:
    """``a[index]`` along axis 0; repeated indices accumulate on the way back."""
    idx = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return make_result(a.data[idx], (a,), backward)


def slice_rows(a: Tensor, stop: int) -> Tensor:
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[:stop] = g
        return (out,)

    return make_result(a.data[:stop], (a,), backward)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[..., start:stop] = g
        return (out,)

    return make_result(a.data[..., start:stop], (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of nothing")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    if not tensors:
        raise ShapeError("stack of nothing")
    return make_result(
        np.stack([t.data for t in tensors]), tensors, lambda g: tuple(g[i] for i in range(len(tensors)))
    )


def mean_over_time(states: Tensor) -> Tensor:
    """Average an ``(n, d)`` sequence of states over its first axis."""
    if states.data.ndim != 2 or states.shape[0] == 0:
        raise ShapeError("mean_over_time needs a non-empty (n, d) sequence")
    n = states.shape[0]
    return make_result(
        states.data.mean(axis=0), (states,), lambda g: (np.broadcast_to(g / n, states.shape).copy(),)
    )


def masked_mean_over_time(states: Tensor, lengths) -> Tensor:
    """Per-row mean over the first ``lengths[b]`` steps of a ``(B, T, d)`` batch."""
    lengths = np.asarray(lengths, dtype=np.int64)
    B, T, _ = states.shape
    if lengths.shape != (B,) or lengths.min(initial=1) < 1 or lengths.max(initial=0) > T:
        raise ShapeError("masked_mean_over_time: bad lengths")
    weights = (np.arange(T)[None, :] < lengths[:, None]) / lengths[:, None]
    out = np.einsum("bt,btd->bd", weights, states.data)
    return make_result(out, (states,), lambda g: (weights[:, :, None] * g[:, None, :],))


def dropout(a: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; the identity outside training."""
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return make_result(a.data * keep, (a,), lambda g: (g * keep,))


def bce_with_logits(logits: Tensor, targets, weights) -> Tensor:
    """``sum_i w_i * BCE(sigmoid(z_i), y_i)`` computed from logits for stability."""
    z = logits.data
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if z.shape != y.shape or z.shape != w.shape:
        raise ShapeError("bce_with_logits: logits, targets and weights must align")
    # -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    per = np.logaddexp(0.0, z) - y * z
    prob = stable_sigmoid(z)
    return make_result(np.asarray((w * per).sum()), (logits,), lambda g: (g * w * (prob - y),))


def weighted_squared_error(pred: Tensor, targets, weights) -> Tensor:
    p = pred.data
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if p.shape != y.shape or p.shape != w.shape:
        raise ShapeError("weighted_squared_error: shapes must align")
    diff = p - y
    return make_result(np.asarray((w * diff * diff).sum()), (pred,), lambda g: (g * 2.0 * w * diff,))


def affine_sigmoid(h: Tensor, v: Tensor, b=None) -> Tensor:
    """``sigmoid(h . v + b)``; ``h`` may be a single vector or a batch of rows."""
    z = matmul(h, v)
    if b is not None:
        z = add(z, b if isinstance(b, Tensor) else Tensor(float(b)))
    return sigmoid(z)


def max_over_rows(a: Tensor) -> Tensor:
    """Elementwise maximum over axis 0; ties route gradient to the first maximiser."""
    if a.data.ndim != 2 or a.shape[0] == 0:
        raise ShapeError("max_over_rows needs a non-empty (T, d) matrix")
    arg = a.data.argmax(axis=0)
    cols = np.arange(a.shape[1])
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[arg, cols] = g
        return (out,)

    return make_result(a.data[arg, cols], (a,), backward)
