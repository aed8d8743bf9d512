import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from src.models.exceptions import StatisticsError
from src.models.stats_models import ConfusionCounts
from src.services.metrics_service import (
    accuracy,
    classification_metrics,
    confusion,
    f1,
    paired_t_test,
    precision,
    recall,
    roc_auc,
    student_t_two_sided_p,
    summarize,
)


def test_confusion_by_hand():
    counts = confusion([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1])
    assert (counts.tp, counts.fp, counts.tn, counts.fn) == (1, 1, 1, 1)
    assert accuracy(counts) == 0.5
    assert precision(counts) == 0.5
    assert recall(counts) == 0.5
    assert f1(counts) == 0.5


def test_threshold_is_inclusive():
    counts = confusion([0.5, 0.49], [1, 0])
    assert (counts.tp, counts.tn) == (1, 1)


def test_zero_denominators_give_zero():
    nothing_predicted = confusion([0.1, 0.2], [1, 0])
    assert precision(nothing_predicted) == 0.0
    assert f1(nothing_predicted) == 0.0

    no_positives = confusion([0.1, 0.2], [0, 0])
    assert recall(no_positives) == 0.0
    assert accuracy(no_positives) == 1.0

    assert accuracy(ConfusionCounts(tp=0, fp=0, tn=0, fn=0)) == 0.0


def test_confusion_rejects_bad_input():
    with pytest.raises(StatisticsError):
        confusion([0.1], [1, 0])
    with pytest.raises(StatisticsError):
        confusion([], [])
    with pytest.raises(StatisticsError):
        confusion([0.1], [1], threshold=1.0)


def test_roc_auc_examples():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5


def test_roc_auc_single_class():
    with pytest.raises(StatisticsError):
        roc_auc([0.1, 0.9], [1, 1])


def _concordance(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (pos.size * neg.size)


def test_roc_auc_matches_pairwise_count():
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 1000:
        n = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        # coarse scores so ties occur
        scores = rng.integers(0, 6, size=n) / 5.0
        assert roc_auc(scores, labels) == pytest.approx(_concordance(scores, labels), abs=1e-12)
        checked += 1


def test_roc_auc_invariant_under_monotone_maps():
    rng = np.random.default_rng(3)
    scores = rng.uniform(size=40)
    labels = np.array([0, 1] * 20)
    base = roc_auc(scores, labels)
    assert roc_auc(np.exp(3 * scores) - 7, labels) == base
    assert roc_auc(scores**3, labels) == base


def test_classification_metrics_bundle():
    m = classification_metrics(np.array([0.9, 0.2, 0.8, 0.3]), np.array([1, 0, 0, 1]))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5, 0.5)
    assert m.roc_auc == 0.75


def _t_density(x: float, dof: int) -> float:
    norm = math.gamma((dof + 1) / 2) / (math.sqrt(dof * math.pi) * math.gamma(dof / 2))
    return norm * (1 + x * x / dof) ** (-(dof + 1) / 2)


def test_paired_t_test_identical_samples_are_degenerate():
    result = paired_t_test([0.8, 0.9, 0.7], [0.8, 0.9, 0.7])
    assert result.degenerate
    assert (result.t, result.p_value, result.dof) == (0.0, 1.0, 2)


def test_paired_t_test_zero_mean():
    result = paired_t_test([1.0, -1.0], [0.0, 0.0])
    assert result.t == 0.0
    assert result.p_value == pytest.approx(1.0)
    assert not result.degenerate


def test_paired_t_test_against_integrated_density():
    d = np.array([1.0, 1.1, 0.9, 1.2, 0.8])
    result = paired_t_test(d, np.zeros(5))
    assert result.t == pytest.approx(1.0 * math.sqrt(5) / math.sqrt(0.025))
    tail, _ = quad(_t_density, abs(result.t), math.inf, args=(4,), epsabs=1e-14)
    assert result.p_value == pytest.approx(2 * tail, rel=1e-6)
    assert result.p_value == pytest.approx(stats.ttest_rel(d, np.zeros(5)).pvalue, rel=1e-9)


def test_paired_t_test_constant_difference():
    result = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert result.t == math.inf
    assert result.p_value == 0.0
    assert paired_t_test([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]).t == -math.inf


def test_paired_t_test_is_antisymmetric():
    a = [0.81, 0.79, 0.85, 0.90]
    b = [0.70, 0.80, 0.75, 0.88]
    forward, backward = paired_t_test(a, b), paired_t_test(b, a)
    assert forward.t == pytest.approx(-backward.t)
    assert forward.p_value == pytest.approx(backward.p_value)


def test_p_value_decreases_with_t():
    values = [student_t_two_sided_p(t, 5) for t in np.linspace(0.0, 20.0, 200)]
    assert values[0] == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert student_t_two_sided_p(-2.0, 5) == student_t_two_sided_p(2.0, 5)


def test_paired_t_test_errors():
    with pytest.raises(StatisticsError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(StatisticsError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


def test_summarize():
    single = summarize([5.0])
    assert (single.mean, single.std, single.stderr, single.n) == (5.0, 0.0, 0.0, 1)

    pair = summarize([1.0, 3.0])
    assert pair.mean == 2.0
    assert pair.std == pytest.approx(math.sqrt(2))
    assert pair.stderr == pytest.approx(1.0)

    constant = summarize([0.1] * 7)
    assert constant.std == 0.0
    assert constant.mean == 0.1

    with pytest.raises(StatisticsError):
        summarize([])


def test_paired_t_test_against_quadrature_on_random_samples():
    rng = np.random.default_rng(2718)
    for _ in range(100):
        a = rng.normal(0.8, 0.05, size=5)
        b = rng.normal(0.78, 0.05, size=5)
        result = paired_t_test(a, b)
        tail, _ = quad(_t_density, abs(result.t), math.inf, args=(4,), epsabs=1e-14)
        assert result.p_value == pytest.approx(2 * tail, rel=1e-6, abs=1e-12)
