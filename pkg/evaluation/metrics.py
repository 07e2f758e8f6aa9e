from dataclasses import dataclass

import numpy as np
from sklearn import metrics


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f'Scores {scores.shape} and labels {labels.shape} must be equal-length vectors')
    if not np.isfinite(scores).all():
        raise ValueError('Scores contain non-finite values')
    if not np.isin(labels, (0, 1)).all():
        raise ValueError('Labels must be 0 or 1')
    labels = labels.astype(int)
    if labels.min(initial=1) == labels.max(initial=0) or not len(labels):
        raise ValueError('AUC undefined: labels contain a single class')
    return scores, labels


def roc_curve(scores, labels) -> RocCurve:
    """Frame-level ROC over every distinct threshold; tied scores share one point."""
    scores, labels = _validate(scores, labels)
    fpr, tpr, thresholds = metrics.roc_curve(labels, scores, drop_intermediate=False)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=float(metrics.auc(fpr, tpr)))


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve, label 1 = anomalous."""
    return roc_curve(scores, labels).auc


def mann_whitney_auc(scores, labels) -> float:
    """Probability a random anomalous frame outscores a random normal one, ties counting half."""
    scores, labels = _validate(scores, labels)
    positives = scores[labels == 1]
    negatives = scores[labels == 0]
    greater = (positives[:, None] > negatives[None, :]).sum()
    ties = (positives[:, None] == negatives[None, :]).sum()
    return float((greater + 0.5 * ties) / (len(positives) * len(negatives)))
