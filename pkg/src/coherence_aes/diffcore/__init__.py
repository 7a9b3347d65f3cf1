"""Minimal reverse-mode differentiation engine for the coherence/scoring networks."""
from . import ops
from .gradcheck import grad_check
from .lstm import LstmParams, lstm_sequence, lstm_step, pad_batch
from .ops import affine_sigmoid, mean_over_time
from .optim import RmsPropState, clip_grad_norm, rmsprop_step, zero_grads
from .tensor import Parameter, ShapeError, Tensor

__all__ = [
    "LstmParams",
    "Parameter",
    "RmsPropState",
    "ShapeError",
    "Tensor",
    "affine_sigmoid",
    "clip_grad_norm",
    "grad_check",
    "lstm_sequence",
    "lstm_step",
    "mean_over_time",
    "ops",
    "pad_batch",
    "rmsprop_step",
    "zero_grads",
]
