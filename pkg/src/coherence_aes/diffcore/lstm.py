"""LSTM cell (input, forget, output, candidate gates; no peepholes)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Parameter, ShapeError, Tensor, make_result

# gate blocks inside the 4*d pre-activation, in this order
GATES = ("input", "forget", "output", "candidate")


@dataclass
class LstmParams:
    input_weights: Parameter      # (k, 4d)
    recurrent_weights: Parameter  # (d, 4d)
    gate_biases: Parameter        # (4d,)

    def __post_init__(self):
        k, four_d = self.input_weights.shape
        d = four_d // 4
        if four_d != 4 * d or self.recurrent_weights.shape != (d, four_d) or self.gate_biases.shape != (four_d,):
            raise ShapeError("inconsistent LSTM parameter shapes")

    @property
    def input_size(self) -> int:
        return self.input_weights.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.input_weights, self.recurrent_weights, self.gate_biases]

    @classmethod
    def init(cls, k: int, d: int, rng: np.random.Generator, scale: float = 0.05, prefix: str = "lstm"):
        return cls(
            Parameter(rng.uniform(-scale, scale, (k, 4 * d)), f"{prefix}.input_weights"),
            Parameter(rng.uniform(-scale, scale, (d, 4 * d)), f"{prefix}.recurrent_weights"),
            Parameter(np.zeros(4 * d), f"{prefix}.gate_biases"),
        )


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One recurrence step built from primitive ops; returns ``(h, c)``."""
    d = p.hidden_size
    if x.shape != (p.input_size,) or h_prev.shape != (d,) or c_prev.shape != (d,):
        raise ShapeError(f"lstm_step: x{x.shape} h{h_prev.shape} c{c_prev.shape} vs k={p.input_size}, d={d}")
    z = ops.add(ops.add(ops.matmul(x, p.input_weights), ops.matmul(h_prev, p.recurrent_weights)), p.gate_biases)
    i = ops.sigmoid(ops.slice_last(z, 0, d))
    f = ops.sigmoid(ops.slice_last(z, d, 2 * d))
    o = ops.sigmoid(ops.slice_last(z, 2 * d, 3 * d))
    g = ops.tanh(ops.slice_last(z, 3 * d, 4 * d))
    c = ops.add(ops.mul(f, c_prev), ops.mul(i, g))
    h = ops.mul(o, ops.tanh(c))
    return h, c


def _sig(x):
    return ops.stable_sigmoid(x)


def lstm_sequence(inputs: Tensor, p: LstmParams) -> Tensor:
    """Run a batch of right-padded sequences from zero state.

    ``inputs`` is ``(B, T, k)``; the result holds every hidden state, ``(B, T, d)``.
    Positions past a sequence's true length compute throwaway states; as long as
    no loss reads them, their gradient contribution is exactly zero.
    """
    X = inputs.data
    if X.ndim != 3 or X.shape[2] != p.input_size:
        raise ShapeError(f"lstm_sequence: inputs {X.shape}, expected (B, T, {p.input_size})")
    B, T, k = X.shape
    d = p.hidden_size
    Wx, Wh, b = p.input_weights.data, p.recurrent_weights.data, p.gate_biases.data

    xw = (X.reshape(B * T, k) @ Wx).reshape(B, T, 4 * d) + b
    H = np.zeros((B, T, d))
    C = np.zeros((B, T, d))
    gates = np.zeros((B, T, 4 * d))  # post-activation i, f, o, g
    h = np.zeros((B, d))
    c = np.zeros((B, d))
    for t in range(T):
        z = xw[:, t] + h @ Wh
        act = gates[:, t]
        act[:, : 3 * d] = _sig(z[:, : 3 * d])
        act[:, 3 * d:] = np.tanh(z[:, 3 * d:])
        i, f, o, g = act[:, :d], act[:, d:2 * d], act[:, 2 * d:3 * d], act[:, 3 * d:]
        c = f * c + i * g
        h = o * np.tanh(c)
        C[:, t] = c
        H[:, t] = h

    def backward(dH):
        dZ = np.zeros((B, T, 4 * d))
        dWh = np.zeros_like(Wh)
        dh_next = np.zeros((B, d))
        dc_next = np.zeros((B, d))
        for t in range(T - 1, -1, -1):
            act = gates[:, t]
            i, f, o, g = act[:, :d], act[:, d:2 * d], act[:, 2 * d:3 * d], act[:, 3 * d:]
            c_prev = C[:, t - 1] if t > 0 else np.zeros((B, d))
            h_prev = H[:, t - 1] if t > 0 else np.zeros((B, d))
            tc = np.tanh(C[:, t])
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dz[:, :d] = dc * g * i * (1.0 - i)
            dz[:, d:2 * d] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * d:3 * d] = dh * tc * o * (1.0 - o)
            dz[:, 3 * d:] = dc * i * (1.0 - g * g)
            dWh += h_prev.T @ dz
            dh_next = dz @ Wh.T
            dc_next = dc * f
        flat = dZ.reshape(B * T, 4 * d)
        dX = (flat @ Wx.T).reshape(B, T, k)
        dWx = X.reshape(B * T, k).T @ flat
        db = flat.sum(axis=0)
        return dX, dWx, dWh, db

    return make_result(H, (inputs, p.input_weights, p.recurrent_weights, p.gate_biases), backward)


def pad_batch(sequences, pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences into an ``(B, T)`` matrix; returns ``(ids, lengths)``."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if len(sequences) == 0 or lengths.min() < 1:
        raise ShapeError("every sequence must be non-empty")
    ids = np.full((len(sequences), int(lengths.max())), pad_id, dtype=np.int64)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
    return ids, lengths
