"""Concatenation baseline: frozen AES essay vector plus the element-wise max
of the LC clique vectors, regressed with RBF kernel ridge."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .aes_model import AesModel, ScoreScale, unscale_score
from .lc_model import LcModel, clique_vector_max
from .textpipe import Essay

DEFAULT_ALPHA = 0.1
DEFAULT_GAMMA = 0.1


def concat_features(essay: Essay, lc: LcModel, aes: AesModel) -> np.ndarray:
    essay_part = aes.forward([aes.encode(essay)])[0].data[0]
    clique_part = clique_vector_max(lc.clique_representations(essay))
    return np.concatenate([essay_part, clique_part])


def feature_matrix(essays: Sequence[Essay], lc: LcModel, aes: AesModel) -> np.ndarray:
    if not essays:
        return np.zeros((0, aes.config.hidden_size + lc.config.cnn_size))
    reprs, _ = aes.predict(essays)
    cliques = np.stack([clique_vector_max(c) for c in _clique_batches(essays, lc)])
    return np.concatenate([reprs, cliques], axis=1)


def _clique_batches(essays, lc: LcModel, batch_size: int = 64):
    for start in range(0, len(essays), batch_size):
        out = lc.forward([lc.encode(e) for e in essays[start:start + batch_size]])
        yield from out.per_essay(out.cliques.data)


def rbf_kernel(x, y, gamma: float) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"vector lengths differ: {x.shape} vs {y.shape}")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_gram(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of X and Y."""
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("feature dimensions differ")
    sq = np.sum(X ** 2, axis=1)[:, None] + np.sum(Y ** 2, axis=1)[None, :] - 2.0 * X @ Y.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class KernelRidgeModel:
    train_features: np.ndarray
    dual_coef: np.ndarray
    alpha: float = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if len(self.dual_coef) != len(self.train_features):
            raise ValueError("one dual coefficient per training row")

    def predict(self, features) -> np.ndarray:
        """Raw regression output (not clipped)."""
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return rbf_gram(F, self.train_features, self.gamma) @ self.dual_coef


def kernel_ridge_fit(features, targets, alpha: float = DEFAULT_ALPHA, gamma: float = DEFAULT_GAMMA) -> KernelRidgeModel:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if len(y) == 0 or len(y) != len(X):
        raise ValueError("need one target per feature row and at least one row")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("targets must be scaled to [0, 1]")
    K = rbf_gram(X, X, gamma)
    coef = scipy.linalg.solve(K + alpha * np.eye(len(y)), y, assume_a="pos")
    return KernelRidgeModel(X.copy(), coef, alpha, gamma)


def kernel_ridge_predict(model: KernelRidgeModel, feature, scale: ScoreScale) -> float:
    value = float(model.predict(feature)[0])
    return unscale_score(float(np.clip(value, 0.0, 1.0)), scale)
