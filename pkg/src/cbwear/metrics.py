"""Evaluation metrics: rank-based AUC-ROC, precision/recall/macro-F1,
confusion matrices, and normal-approximation confidence intervals."""

from __future__ import annotations

import logging

import numpy as np
from scipy.stats import rankdata

from .errors import SingleClass

log = logging.getLogger(__name__)


def auc_roc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties at
    half weight (midranks; equals the normalized Mann-Whitney U)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_roc_ovr_macro(probs: np.ndarray, labels, n_classes: int) -> float:
    """Unweighted mean of one-vs-rest AUCs over classes present in labels."""
    labels = np.asarray(labels)
    aucs = []
    for c in range(n_classes):
        y = (labels == c).astype(int)
        if y.sum() in (0, len(y)):
            continue
        aucs.append(auc_roc(probs[:, c], y))
    if not aucs:
        raise SingleClass("no class with both positives and negatives")
    return float(np.mean(aucs))


def prf_metrics(scores, labels, threshold: float = 0.5):
    """Positive-class precision and recall plus macro-F1 at a score threshold.

    Per-class F1 that is undefined (no predictions and no instances of the
    class) counts as 0 with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = (scores >= threshold).astype(int)
    return prf_from_predictions(pred, labels, n_classes=2)


def prf_from_predictions(pred, labels, n_classes: int):
    """(precision, recall, f1_macro); precision/recall are for the positive
    class when binary, macro-averaged otherwise."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    per_class_p, per_class_r, per_class_f1 = [], [], []
    for c in range(n_classes):
        tp = int(((pred == c) & (labels == c)).sum())
        fp = int(((pred == c) & (labels != c)).sum())
        fn = int(((pred != c) & (labels == c)).sum())
        p = tp / (tp + fp) if (tp + fp) else 0.0
        r = tp / (tp + fn) if (tp + fn) else 0.0
        if (tp + fp) == 0 and (tp + fn) == 0:
            log.warning("class %d has no predictions and no instances; F1 set to 0", c)
            f1 = 0.0
        else:
            f1 = 2 * p * r / (p + r) if (p + r) else 0.0
        per_class_p.append(p)
        per_class_r.append(r)
        per_class_f1.append(f1)
    f1_macro = float(np.mean(per_class_f1))
    if n_classes == 2:
        return per_class_p[1], per_class_r[1], f1_macro
    return float(np.mean(per_class_p)), float(np.mean(per_class_r)), f1_macro


def confusion_matrix(pred, labels, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(np.asarray(labels), np.asarray(pred)):
        cm[int(t), int(p)] += 1
    return cm


def row_normalize(cm: np.ndarray) -> np.ndarray:
    cm = cm.astype(np.float64)
    sums = cm.sum(axis=1, keepdims=True)
    out = np.zeros_like(cm)
    np.divide(cm, sums, out=out, where=sums > 0)
    return out


def mean_ci95(values) -> tuple[float, float]:
    """Mean and 95% CI half-width 1.96*sd/sqrt(n) over fold x run scores.
    NaN scores (folds where a metric was undefined) are skipped."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size))
