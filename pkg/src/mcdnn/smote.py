"""Multi-class SMOTE oversampling of a training design matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

__all__ = ["SmoteConfig", "SmoteResult", "smote_balance", "k_nearest_same_class"]


@dataclass(frozen=True)
class SmoteConfig:
    """``target`` is ``"match_majority"`` or a mapping class -> final count."""

    k_neighbors: int = 5
    target: str | Mapping[int, int] = "match_majority"
    seed: int = 0
    # (start, stop) column ranges holding one-hot encodings
    onehot_blocks: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class SmoteResult:
    X: np.ndarray
    y: np.ndarray
    # per synthetic row: (base row, neighbour row) indices into X, and the interpolation factor
    parents: np.ndarray
    deltas: np.ndarray


def k_nearest_same_class(Xc: np.ndarray, k: int, rows: np.ndarray | None = None, chunk: int = 256) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of ``Xc`` for each of ``rows``.

    Exact brute force; equal distances go to the lower index.
    """
    rows = np.arange(Xc.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    out = np.empty((rows.size, k), dtype=np.int64)
    for start in range(0, rows.size, chunk):
        r = rows[start : start + chunk]
        d = cdist(Xc[r], Xc, "sqeuclidean")
        d[np.arange(r.size), r] = np.inf
        out[start : start + r.size] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def _targets(counts: dict[int, int], target) -> dict[int, int]:
    if isinstance(target, str):
        if target != "match_majority":
            raise ValidationError(f"unknown SMOTE target {target!r}")
        top = max(counts.values())
        return {c: top for c in counts}
    goal = {int(c): int(v) for c, v in target.items()}
    for c, v in goal.items():
        if c not in counts:
            raise ValidationError(f"class {c} has no samples to oversample")
        if v < counts[c]:
            raise ValidationError(f"target count {v} for class {c} is below its current count {counts[c]}")
    return {c: goal.get(c, counts[c]) for c in counts}


def _reproject(X: np.ndarray, blocks: Sequence[tuple[int, int]]) -> None:
    for start, stop in blocks:
        block = X[:, start:stop]
        hot = np.argmax(block, axis=1)
        block[:] = 0.0
        block[np.arange(len(X)), hot] = 1.0


def smote_balance(X, y, config: SmoteConfig = SmoteConfig(), detailed: bool = False):
    """Oversample every class up to its target count.

    The original rows come first, unchanged, followed by the synthetic rows
    grouped by class in ascending class order.  Each synthetic row is
    ``x_i + delta * (x_z - x_i)`` for a uniformly drawn member ``x_i`` of the
    class, one of its ``k_neighbors`` nearest same-class neighbours ``x_z``
    and ``delta ~ U[0, 1]``.  One-hot column blocks are snapped back to a
    valid indicator by argmax.

    Returns ``(X', y')``, or a :class:`SmoteResult` when ``detailed``.
    """
    if config.k_neighbors < 1:
        raise ValidationError("k_neighbors must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError("X must be n x d and y must hold n labels")
    classes, sizes = np.unique(y, return_counts=True)
    counts = {int(c): int(s) for c, s in zip(classes, sizes)}
    goal = _targets(counts, config.target)
    rng = np.random.default_rng(config.seed)
    new_X, new_y, parents, deltas = [], [], [], []
    for c in sorted(counts):
        need = goal[c] - counts[c]
        if need <= 0:
            continue
        members = np.flatnonzero(y == c)
        if members.size < 2:
            raise ValidationError(f"class {c} has a single sample; SMOTE needs at least two")
        k = config.k_neighbors
        if k >= members.size:
            warnings.warn(
                f"k_neighbors={k} >= size of class {c} ({members.size}); using {members.size - 1}",
                stacklevel=2,
            )
            k = members.size - 1
        Xc = X[members]
        base = rng.integers(0, members.size, need)
        # neighbours only for rows actually drawn as a base
        uniq, inv = np.unique(base, return_inverse=True)
        nn = k_nearest_same_class(Xc, k, uniq)
        pick = nn[inv, rng.integers(0, k, need)]
        delta = rng.random(need)
        synth = Xc[base] + delta[:, None] * (Xc[pick] - Xc[base])
        new_X.append(synth)
        new_y.append(np.full(need, c, dtype=np.int64))
        parents.append(np.stack([members[base], members[pick]], axis=1))
        deltas.append(delta)
    if new_X:
        synth_X = np.vstack(new_X)
        _reproject(synth_X, config.onehot_blocks)
        out_X = np.vstack([X, synth_X])
        out_y = np.concatenate([y] + new_y)
        par = np.vstack(parents)
        dl = np.concatenate(deltas)
    else:
        out_X, out_y = X.copy(), y.copy()
        par, dl = np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    if detailed:
        return SmoteResult(out_X, out_y, par, dl)
    return out_X, out_y
