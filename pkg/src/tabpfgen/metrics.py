"""ROC AUC via the Mann-Whitney statistic, and RMSE."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from tabpfgen.errors import MetricError


def binary_auc(scores, positive) -> float:
    """P(score_pos > score_neg) + P(tie) / 2 over all positive/negative pairs."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative")
    # average ranks are half-integers, so the rank sum and U are exact in float64
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc(scores, labels) -> float:
    """Binary or macro one-vs-rest AUC.

    ``scores`` is either a length-n vector (labels must be 0/1, score is for
    class 1) or an n x K matrix of class scores. For K = 2 the class-1
    column is used; for K > 2 the per-class one-vs-rest AUCs are averaged
    without weighting.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise MetricError("AUC is undefined for a single-class label vector")
    if scores.ndim == 1:
        return binary_auc(scores, labels == 1)
    if scores.shape[1] == 2:
        return binary_auc(scores[:, 1], labels == 1)
    return float(np.mean([binary_auc(scores[:, k], labels == k) for k in range(scores.shape[1])]))


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((a - b) ** 2)))
