"""Classification and convergence quality metrics."""

from __future__ import annotations

import numpy as np

from .errors import DataFormatError


class UndefinedMetricError(ValueError):
    """The metric is undefined for the given inputs (e.g. no positives)."""


def auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall curve.

    Precision and recall are evaluated at each realized score threshold in
    descending order (tied scores share one threshold); the area accumulates
    recall-step rectangles, precision at the threshold times the recall
    increase there.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d and equally long")
    positives = int(np.sum(labels == 1))
    if positives == 0:
        raise UndefinedMetricError("auPRC undefined without positive labels")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = (labels[order] == 1).astype(np.int64)

    area = 0.0
    recall_prev = 0.0
    tp = 0
    seen = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        tp += int(pos[i:j].sum())
        seen += j - i
        precision = tp / seen
        recall = tp / positives
        if recall > recall_prev:
            area += (recall - recall_prev) * precision
            recall_prev = recall
        i = j
    return area


def relative_suboptimality(f: float, f_star: float) -> float:
    """(f - f*) / f*. Small negatives (oracle slack) are passed through."""
    if not f_star > 0.0:
        raise ValueError("f_star must be positive")
    return (f - f_star) / f_star


def nnz(beta: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(beta)))
