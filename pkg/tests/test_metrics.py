import numpy as np
import pytest

from oracles import pairwise_auc
from selar.metrics import MetricReport, aggregate_runs, auc, macro_f1, recall_at_k


def test_auc_perfect_separation():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_all_ties_is_half():
    assert auc([0.3] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_auc_worked_example():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(4, 200))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        # Quantized scores force plenty of ties.
        scores = np.round(rng.normal(size=n), 1)
        assert auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


def test_auc_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=50)
    labels = rng.integers(0, 2, 50)
    labels[:2] = [0, 1]
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_auc_single_class_rejected():
    with pytest.raises(ValueError, match="positive and a negative"):
        auc([0.1, 0.2], [1, 1])


def test_macro_f1_perfect():
    assert macro_f1([0, 1, 2, 1], [0, 1, 2, 1]) == 1.0


def test_macro_f1_one_sided_prediction():
    # All predicted 0, gold half/half: F1(0)=2/3, F1(1)=0 -> macro 1/3.
    assert macro_f1([0, 0, 0, 0], [0, 0, 1, 1], num_classes=2) == pytest.approx(1 / 3)


def test_macro_f1_absent_class_excluded():
    # Class 2 never appears in gold or pred: it must not dilute the mean.
    with_gap = macro_f1([0, 1, 0, 1], [0, 1, 1, 1], num_classes=3)
    without = macro_f1([0, 1, 0, 1], [0, 1, 1, 1], num_classes=2)
    assert with_gap == pytest.approx(without)


def test_macro_f1_permutation_invariant():
    rng = np.random.default_rng(2)
    pred = rng.integers(0, 3, 40)
    gold = rng.integers(0, 3, 40)
    perm = rng.permutation(40)
    assert macro_f1(pred, gold) == pytest.approx(macro_f1(pred[perm], gold[perm]), abs=1e-12)


def test_micro_f1_equals_accuracy_single_label():
    # With exactly one prediction and one gold label per example,
    # micro-F1 reduces to accuracy.
    pred = np.array([0, 1, 2, 2, 1])
    gold = np.array([0, 2, 2, 2, 0])
    assert macro_f1(pred, gold, micro=True) == pytest.approx(3 / 5)


def test_macro_f1_empty_rejected():
    with pytest.raises(ValueError, match="empty"):
        macro_f1([], [])


def test_recall_at_k_basics():
    ranked = {"u": ["a", "c", "b"]}
    relevant = {"u": {"a", "b"}}
    assert recall_at_k(ranked, relevant, 2) == 0.5
    assert recall_at_k(ranked, relevant, 3) == 1.0


def test_recall_at_k_ge_catalog_is_one():
    ranked = {1: [10, 11, 12], 2: [12, 10, 11]}
    relevant = {1: {11}, 2: {10, 12}}
    assert recall_at_k(ranked, relevant, 3) == 1.0
    assert recall_at_k(ranked, relevant, 50) == 1.0


def test_recall_at_k_monotone_in_k():
    rng = np.random.default_rng(3)
    ranked = {u: list(rng.permutation(20)) for u in range(5)}
    relevant = {u: set(rng.choice(20, size=4, replace=False).tolist()) for u in range(5)}
    values = [recall_at_k(ranked, relevant, k) for k in range(1, 21)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_recall_at_k_skips_users_without_relevant():
    ranked = {1: ["a"], 2: ["b"]}
    relevant = {1: {"a"}, 2: set()}
    assert recall_at_k(ranked, relevant, 1) == 1.0
    with pytest.raises(ValueError, match="no user"):
        recall_at_k(ranked, {1: set()}, 1)


def test_aggregate_runs():
    rep = aggregate_runs([1.0, 1.0, 1.0], name="auc")
    assert (rep.mean, rep.std, rep.n) == (1.0, 0.0, 3)
    rep = aggregate_runs([0.0, 1.0])
    assert (rep.mean, rep.std) == (0.5, 0.5)


def test_aggregate_single_run_flagged():
    rep = aggregate_runs([0.7], name="f1")
    assert rep.n == 1
    assert rep.std == 0.0
    assert rep.runs == (0.7,)
    assert isinstance(rep, MetricReport)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate_runs([])
