"""Benchmark classifiers: k-nearest neighbours and cost-sensitive logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

__all__ = ["LinearModel", "knn_classify", "class_weights", "cslr_train", "linear_predict", "weighted_loss"]


def knn_classify(trainX, trainY, queryX, k: int = 5, n_classes: int | None = None, chunk: int = 512) -> np.ndarray:
    """Majority vote among the ``k`` Euclidean-nearest training rows.

    Equal distances favour the lower training index; tied votes favour the
    lower class code.
    """
    trainX = np.asarray(trainX, dtype=np.float64)
    trainY = np.asarray(trainY, dtype=np.int64)
    queryX = np.asarray(queryX, dtype=np.float64)
    n = trainX.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, {n}], got {k}")
    if queryX.ndim != 2 or queryX.shape[1] != trainX.shape[1]:
        raise ValidationError("query dimension does not match training data")
    C = int(trainY.max()) + 1 if n_classes is None else n_classes
    out = np.empty(queryX.shape[0], dtype=np.int64)
    for start in range(0, queryX.shape[0], chunk):
        d = cdist(queryX[start : start + chunk], trainX, "sqeuclidean")
        kth = np.partition(d, k - 1, axis=1)[:, k - 1]
        for r in range(d.shape[0]):
            cand = np.flatnonzero(d[r] <= kth[r])
            nearest = cand[np.argsort(d[r, cand], kind="stable")[:k]]
            out[start + r] = np.bincount(trainY[nearest], minlength=C).argmax()
    return out


@dataclass(frozen=True)
class LinearModel:
    W: np.ndarray
    class_weights: np.ndarray

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "class_weights": self.class_weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["W"], dtype=np.float64), np.asarray(d["class_weights"], dtype=np.float64))


def class_weights(y, n_classes: int) -> np.ndarray:
    """Inverse-frequency costs n / (M * n_c)."""
    counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=n_classes)
    if np.any(counts == 0):
        raise ValidationError(f"classes {np.flatnonzero(counts == 0).tolist()} are absent from the training data")
    return len(y) / (n_classes * counts)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def weighted_loss(model: LinearModel, X, y, l2_lambda: float = 0.0) -> float:
    """Class-weighted mean cross-entropy plus (lambda/2)||W without bias||^2."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    P = _softmax(_design(X) @ model.W.T)
    ce = -np.log(np.maximum(P[np.arange(len(y)), y], 1e-12))
    return float((model.class_weights[y] * ce).mean() + 0.5 * l2_lambda * (model.W[:, 1:] ** 2).sum())


def cslr_train(
    X,
    y,
    eta: float = 0.1,
    epochs: int = 100,
    l2_lambda: float = 1e-4,
    seed: int = 0,
    batch_size: int = 128,
    n_classes: int | None = None,
    history: list | None = None,
) -> LinearModel:
    """Multinomial logistic regression on class-weighted cross-entropy by mini-batch GD.

    Weights start at zero.  If ``history`` is a list, the full-data weighted
    loss after every epoch is appended to it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError("X must be n x d and y must hold n labels")
    M = int(y.max()) + 1 if n_classes is None else n_classes
    if M < 2:
        raise ValidationError("need at least two classes")
    cw = class_weights(y, M)
    n = X.shape[0]
    bs = min(batch_size, n)
    A = _design(X)
    W = np.zeros((M, A.shape[1]))
    Y = np.zeros((n, M))
    Y[np.arange(n), y] = 1.0
    sw = cw[y]
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            P = _softmax(A[idx] @ W.T)
            G = ((P - Y[idx]) * sw[idx, None]).T @ A[idx] / idx.size
            G[:, 1:] += l2_lambda * W[:, 1:]
            W = W - eta * G
        if history is not None:
            history.append(weighted_loss(LinearModel(W, cw), X, y, l2_lambda))
    return LinearModel(W, cw)


def linear_predict(model: LinearModel, X) -> np.ndarray:
    """Argmax of softmax(W [1, x]); ties resolve to the lowest class code."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] + 1 != model.W.shape[1]:
        raise ValidationError(f"expected {model.W.shape[1] - 1} features, got shape {X.shape}")
    # softmax is monotone, so the argmax of the logits is the same label
    return np.argmax(_design(X) @ model.W.T, axis=1)
