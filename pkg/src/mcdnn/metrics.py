"""Confusion matrices, the five error criteria and under/over-estimation counts.

Conventions: rows of a confusion matrix are actual classes, columns are
predicted classes.  A ratio whose denominator is zero is reported as 0 and
the class carries a degeneracy flag naming the affected quantity.
G-mean here is sqrt(recall * precision).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "ConfusionMatrix",
    "ClassMetrics",
    "UnderOver",
    "EvalReport",
    "confusion",
    "per_class_metrics",
    "f_measure",
    "g_mean",
    "macro_aggregate",
    "under_over_rates",
    "evaluate",
]

CHARGING_CLASSES = (1, 2, 3)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError(f"confusion matrix must be square, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValidationError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def C(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))


def confusion(actual, predicted, C: int) -> ConfusionMatrix:
    actual = np.asarray(actual, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ValidationError(f"label vectors differ in shape: {actual.shape} vs {predicted.shape}")
    for name, v in (("actual", actual), ("predicted", predicted)):
        if v.size and (v.min() < 0 or v.max() >= C):
            raise ValidationError(f"{name} labels must lie in [0, {C})")
    counts = np.zeros((C, C), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts)


def f_measure(recall: float, precision: float, beta: float = 1.0) -> float:
    b2 = beta * beta
    denom = recall + b2 * precision
    return (b2 + 1.0) * recall * precision / denom if denom > 0 else 0.0


def g_mean(recall: float, precision: float) -> float:
    return math.sqrt(recall * precision)


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fn: int
    fp: int
    tn: int
    recall: float
    precision: float
    accuracy: float
    f_measure: float
    g_mean: float
    degenerate: tuple[str, ...] = ()


def per_class_metrics(cm: ConfusionMatrix, c: int, beta: float = 1.0) -> ClassMetrics:
    """One-vs-rest counts and criteria for class ``c``."""
    if not 0 <= c < cm.C:
        raise ValidationError(f"class index {c} outside [0, {cm.C})")
    m = cm.counts
    tp = int(m[c, c])
    fn = int(m[c].sum()) - tp
    fp = int(m[:, c].sum()) - tp
    tn = cm.total - tp - fn - fp
    flags = []
    if tp + fn == 0:
        flags.append("recall")
    if tp + fp == 0:
        flags.append("precision")
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    accuracy = (tp + tn) / cm.total if cm.total else 0.0
    if cm.total == 0:
        flags.append("accuracy")
    b2 = beta * beta
    if recall + b2 * precision == 0:
        flags.append("f_measure")
    return ClassMetrics(
        tp, fn, fp, tn, recall, precision, accuracy,
        f_measure(recall, precision, beta), g_mean(recall, precision), tuple(flags),
    )


@dataclass(frozen=True)
class UnderOver:
    level: int
    under_count: int
    under_rate: float
    over_count: int
    over_rate: float
    empty_row: bool = False


def under_over_rates(cm: ConfusionMatrix) -> tuple[UnderOver, ...]:
    """Missed charging events per level and non-charging trips predicted as each level."""
    if cm.C != 4:
        raise ValidationError(f"under/over accounting needs the 4 charge levels, got C={cm.C}")
    m = cm.counts
    none_total = int(m[0].sum())
    out = []
    for c in CHARGING_CLASSES:
        row_total = int(m[c].sum())
        under = row_total - int(m[c, c])
        over = int(m[0, c])
        out.append(
            UnderOver(
                level=c,
                under_count=under,
                under_rate=under / row_total if row_total else 0.0,
                over_count=over,
                over_rate=over / none_total if none_total else 0.0,
                empty_row=row_total == 0 or none_total == 0,
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class EvalReport:
    """Aggregate criteria over all classes.

    ``macro_f``/``macro_g`` average the per-class F and G values;
    ``f_from_macro``/``g_from_macro`` recompute F and G from the macro
    precision and recall.
    """

    confusion: ConfusionMatrix
    per_class: tuple[ClassMetrics, ...]
    beta: float
    accuracy: float
    macro_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f: float
    macro_g: float
    f_from_macro: float
    g_from_macro: float
    under_over: tuple[UnderOver, ...] | None = None

    @property
    def degenerate(self) -> bool:
        return any(m.degenerate for m in self.per_class)


def macro_aggregate(cm: ConfusionMatrix, beta: float = 1.0) -> EvalReport:
    if cm.total == 0:
        raise ValidationError("confusion matrix is empty")
    per = tuple(per_class_metrics(cm, c, beta) for c in range(cm.C))
    mp = float(np.mean([m.precision for m in per]))
    mr = float(np.mean([m.recall for m in per]))
    return EvalReport(
        confusion=cm,
        per_class=per,
        beta=beta,
        accuracy=cm.trace / cm.total,
        macro_accuracy=float(np.mean([m.accuracy for m in per])),
        macro_precision=mp,
        macro_recall=mr,
        macro_f=float(np.mean([m.f_measure for m in per])),
        macro_g=float(np.mean([m.g_mean for m in per])),
        f_from_macro=f_measure(mr, mp, beta),
        g_from_macro=g_mean(mr, mp),
        under_over=under_over_rates(cm) if cm.C == 4 else None,
    )


def evaluate(actual, predicted, C: int = 4, beta: float = 1.0) -> EvalReport:
    return macro_aggregate(confusion(actual, predicted, C), beta)
