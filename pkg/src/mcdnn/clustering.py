"""K-means fitting, silhouette scoring and cluster-count selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

__all__ = [
    "KMAX",
    "ClusterModel",
    "SilhouetteReport",
    "kmeans_fit",
    "assign_nearest",
    "silhouette_mean",
    "select_k",
]

# larger cluster counts were found not to change the clustering result
KMAX = 7
SILHOUETTE_SAMPLE = 5000


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    inertia: float
    feature_ids: tuple[str, ...] = ()
    n_iter: int = 0
    inertia_history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "feature_ids": list(self.feature_ids),
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        return cls(
            k=int(d["k"]),
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            inertia=float(d["inertia"]),
            feature_ids=tuple(d.get("feature_ids", ())),
            n_iter=int(d.get("n_iter", 0)),
        )


@dataclass(frozen=True)
class SilhouetteReport:
    scores: dict[int, float]
    best_k: int
    inertias: dict[int, float] = field(default_factory=dict)


def _sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("matrix contains non-finite values")
    return X


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sqdist(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = X[idx]
        closest = np.minimum(closest, _sqdist(X, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    k = centers.shape[0]
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        D = _sqdist(X, centers)
        labels = np.argmin(D, axis=1)
        own = D[np.arange(len(X)), labels]
        history.append(float(own.sum()))
        counts = np.bincount(labels, minlength=k)
        # empty cluster: move its centroid onto the point farthest from its own centroid
        for j in np.flatnonzero(counts == 0):
            donors = counts[labels] >= 2
            if not donors.any():
                break
            far = int(np.argmax(np.where(donors, own, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            own[far] = 0.0
        onehot = np.zeros((len(X), k))
        onehot[np.arange(len(X)), labels] = 1.0
        new_centers = (onehot.T @ X) / np.maximum(counts, 1)[:, None]
        new_centers[counts == 0] = centers[counts == 0]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    D = _sqdist(X, centers)
    inertia = float(D.min(axis=1).sum())
    history.append(inertia)
    return centers, inertia, n_iter, tuple(history)


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 1,
    feature_ids: tuple[str, ...] = (),
) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds; the best of ``n_init`` restarts wins.

    Restart ``r`` draws its seeding from ``default_rng([seed, r])`` so results
    are a pure function of the inputs and ``seed``.
    """
    X = _check_matrix(X)
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if X.shape[0] < k:
        raise ValidationError(f"need at least k={k} rows, got {X.shape[0]}")
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")
    best = None
    for r in range(n_init):
        rng = np.random.default_rng([seed, r])
        centers, inertia, n_iter, history = _lloyd(X, _kmeans_pp(X, k, rng), max_iter, tol)
        if best is None or inertia < best[1]:
            best = (centers, inertia, n_iter, history)
    centers, inertia, n_iter, history = best
    return ClusterModel(k, centers, inertia, tuple(feature_ids), n_iter, history)


def assign_nearest(model: ClusterModel, X) -> np.ndarray:
    """Euclidean-nearest centroid per row; ties go to the lowest index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.centroids.shape[1]:
        raise ValidationError(
            f"expected {model.centroids.shape[1]} columns, got shape {X.shape}"
        )
    return np.argmin(_sqdist(X, model.centroids), axis=1)


def silhouette_mean(X, labels, chunk: int = 512) -> float:
    """Mean silhouette coefficient; singleton clusters contribute 0."""
    X = _check_matrix(X)
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise ValidationError("labels must have one entry per row")
    _, inv = np.unique(labels, return_inverse=True)
    m = int(inv.max()) + 1 if inv.size else 0
    if m < 2:
        raise ValidationError("silhouette needs at least two distinct clusters")
    n = X.shape[0]
    sizes = np.bincount(inv, minlength=m).astype(np.float64)
    onehot = np.zeros((n, m))
    onehot[np.arange(n), inv] = 1.0
    s = np.zeros(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sums = cdist(X[start:stop], X) @ onehot
        own = inv[start:stop]
        rows = np.arange(stop - start)
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
        mean_other = sums / sizes[None, :]
        mean_other[rows, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(denom > 0, (b - a) / denom, 0.0)
        s[start:stop] = np.where(own_size > 1, vals, 0.0)
    return float(s.mean())


def select_k(
    X,
    kmin: int = 2,
    kmax: int = KMAX,
    seed: int = 0,
    n_init: int = 10,
    sample_size: int = SILHOUETTE_SAMPLE,
) -> SilhouetteReport:
    """Score K-means solutions for k in [kmin, kmax] by mean silhouette.

    The silhouette is evaluated on a seeded uniform subsample of at most
    ``sample_size`` rows.  Ties in the score resolve to the smaller k.
    """
    X = _check_matrix(X)
    if kmin < 2 or kmax < kmin:
        raise ValidationError(f"need 2 <= kmin <= kmax, got kmin={kmin}, kmax={kmax}")
    n = X.shape[0]
    if n <= kmax:
        raise ValidationError(f"need more than kmax={kmax} rows, got {n}")
    if n > sample_size:
        sub = np.sort(np.random.default_rng([seed, 0x5117]).choice(n, sample_size, replace=False))
    else:
        sub = np.arange(n)
    scores: dict[int, float] = {}
    inertias: dict[int, float] = {}
    for k in range(kmin, kmax + 1):
        model = kmeans_fit(X, k, seed=seed, n_init=n_init)
        labels = assign_nearest(model, X[sub])
        if np.unique(labels).size < 2:
            scores[k] = -1.0
        else:
            scores[k] = silhouette_mean(X[sub], labels)
        inertias[k] = model.inertia
    best_k = max(scores, key=lambda k: (scores[k], -k))
    return SilhouetteReport(scores, best_k, inertias)
