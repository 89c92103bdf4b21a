"""Evaluation metrics and cross-run aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def auc(scores, labels) -> float:
    """ROC-AUC via the Mann-Whitney rank statistic; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"auc: scores shape {s.shape} incompatible with labels shape {y.shape}")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both a positive and a negative example")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    ranks[order] = np.arange(1, len(s) + 1)
    # Average the ranks within each tied group.
    sorted_s = s[order]
    boundary = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate([[0], boundary])
    ends = np.concatenate([boundary, [len(s)]])
    for a, b in zip(starts, ends):
        if b - a > 1:
            ranks[order[a:b]] = 0.5 * (a + 1 + b)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_counts(pred, gold, num_classes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class (true positive, false positive, false negative) counts."""
    pred = np.asarray(pred, dtype=np.intp)
    gold = np.asarray(gold, dtype=np.intp)
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    hit = pred == gold
    np.add.at(tp, pred[hit], 1)
    np.add.at(fp, pred[~hit], 1)
    np.add.at(fn, gold[~hit], 1)
    return tp, fp, fn


def macro_f1(pred, gold, num_classes: int | None = None, micro: bool = False) -> float:
    """Unweighted mean of per-class F1 scores.

    Classes that appear in neither ``gold`` nor ``pred`` are excluded from
    the macro average (they carry no evidence either way). ``micro=True``
    pools the confusion counts over classes instead.
    """
    pred = np.asarray(pred, dtype=np.intp)
    gold = np.asarray(gold, dtype=np.intp)
    if pred.shape != gold.shape or pred.ndim != 1:
        raise ValueError(f"macro_f1: pred shape {pred.shape} incompatible with gold shape {gold.shape}")
    if len(pred) == 0:
        raise ValueError("macro_f1 on empty input")
    if num_classes is None:
        num_classes = int(max(pred.max(), gold.max())) + 1
    tp, fp, fn = f1_counts(pred, gold, num_classes)
    if micro:
        denom = 2 * tp.sum() + fp.sum() + fn.sum()
        return float(2 * tp.sum() / denom) if denom else 0.0
    present = (tp + fp + fn) > 0
    denom = 2 * tp + fp + fn
    f1 = np.zeros(num_classes, dtype=np.float64)
    np.divide(2 * tp, denom, out=f1, where=denom > 0)
    return float(f1[present].mean())


def recall_at_k(ranked: dict, relevant: dict, k: int) -> float:
    """Mean over users of |top-k of ranked ∩ relevant| / |relevant|.

    Users without relevant items are skipped; it is an error if that
    leaves nobody to average over.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    recalls = []
    for user, items in ranked.items():
        rel = relevant.get(user)
        if not rel:
            continue
        hits = sum(1 for item in items[:k] if item in rel)
        recalls.append(hits / len(rel))
    if not recalls:
        raise ValueError("recall_at_k: no user has a relevant item")
    return float(np.mean(recalls))


@dataclass(frozen=True)
class MetricReport:
    name: str
    runs: tuple
    mean: float
    std: float

    @property
    def n(self) -> int:
        return len(self.runs)


def aggregate_runs(values, name: str = "") -> MetricReport:
    """Mean and population std over per-run values (n=1 gives std 0)."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ValueError("aggregate_runs needs at least one value")
    arr = np.asarray(vals)
    return MetricReport(name, vals, float(arr.mean()), float(arr.std()))
