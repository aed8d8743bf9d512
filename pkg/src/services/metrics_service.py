import math
from collections.abc import Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

from ..models.exceptions import StatisticsError
from ..models.stats_models import (
    ClassificationMetrics,
    ConfusionCounts,
    Summary,
    TTestResult,
)


def _as_pair(probs: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray):
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise StatisticsError(f"scores {p.shape} and labels {y.shape} must be equal-length vectors")
    if p.size == 0:
        raise StatisticsError("no samples to evaluate")
    return p, y


def confusion(
    probs: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    threshold: float = 0.5,
) -> ConfusionCounts:
    if not 0.0 < threshold < 1.0:
        raise StatisticsError(f"threshold must lie in (0, 1), got {threshold}")
    p, y = _as_pair(probs, labels)
    predicted = p >= threshold
    actual = y == 1
    return ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


# Zero denominators give 0 so result tables never contain NaN.


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total if c.total else 0.0


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: ConfusionCounts) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else 0.0


def roc_auc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """
    Mann-Whitney estimate: the fraction of (positive, negative) pairs ranked
    correctly, ties counting one half.
    """
    s, y = _as_pair(scores, labels)
    positive = y == 1
    n_pos = int(positive.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise StatisticsError("ROC AUC is undefined when only one class is present")
    ranks = rankdata(s, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def classification_metrics(
    probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> ClassificationMetrics:
    counts = confusion(probs, labels, threshold)
    return ClassificationMetrics(
        accuracy=accuracy(counts),
        precision=precision(counts),
        recall=recall(counts),
        f1=f1(counts),
        roc_auc=roc_auc(probs, labels),
    )


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t via the regularised incomplete beta."""
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return float(min(max(betainc(dof / 2.0, 0.5, x), 0.0), 1.0))


def paired_t_test(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> TTestResult:
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if a_arr.shape != b_arr.shape or a_arr.ndim != 1:
        raise StatisticsError(
            f"paired samples must have equal length, got {a_arr.shape} and {b_arr.shape}"
        )
    n = a_arr.size
    if n < 2:
        raise StatisticsError(f"a paired t-test needs at least 2 pairs, got {n}")

    d = a_arr - b_arr
    dof = n - 1
    if not d.any():
        return TTestResult(t=0.0, p_value=1.0, dof=dof, degenerate=True)

    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        # identical non-zero differences: the evidence is unbounded
        t = math.copysign(math.inf, mean)
    else:
        t = mean * math.sqrt(n) / sd
    return TTestResult(t=t, p_value=student_t_two_sided_p(t, dof), dof=dof)


def summarize(values: Sequence[float] | np.ndarray) -> Summary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise StatisticsError("cannot summarise an empty sample")
    if np.all(v == v[0]):
        return Summary(mean=float(v[0]), std=0.0, stderr=0.0, n=v.size)
    std = float(v.std(ddof=1))
    return Summary(mean=float(v.mean()), std=std, stderr=std / math.sqrt(v.size), n=v.size)
