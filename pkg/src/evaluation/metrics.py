"""
Classification Metrics Module

Confusion matrices (rows = true class, columns = predicted class) and the
scores derived from them. Zero-division convention: any 0/0 in a class's
precision, recall or F1 is 0; classes with neither support nor predictions
are left out of the macro average.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np


def confusion_matrix(y_true, y_pred, num_classes: Optional[int] = None) -> np.ndarray:
    """
    Integer confusion matrix [C, C].

    Args:
        y_true: True class indices
        y_pred: Predicted class indices
        num_classes: C; defaults to 1 + the largest index seen
    """
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{y_true.size} true labels vs {y_pred.size} predictions")
    if num_classes is None:
        num_classes = int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= num_classes):
        raise ValueError(f"class index outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _checked(confusion) -> np.ndarray:
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix has negative entries")
    return cm.astype(np.float64)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_scores(confusion) -> Dict[str, np.ndarray]:
    """
    Per-class precision, recall, F1, support and predicted counts.

    Returns:
        Dict of arrays of length C
    """
    cm = _checked(confusion)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return {"precision": precision, "recall": recall, "f1": f1,
            "support": support, "predicted": predicted}


def macro_f1(confusion) -> float:
    """Unweighted mean F1 over classes that are present or predicted."""
    scores = per_class_scores(confusion)
    active = (scores["support"] > 0) | (scores["predicted"] > 0)
    if not np.any(active):
        return 0.0
    return float(np.mean(scores["f1"][active]))


def weighted_f1(confusion) -> float:
    """Support-weighted mean F1."""
    scores = per_class_scores(confusion)
    total = scores["support"].sum()
    if total == 0:
        return 0.0
    return float(np.sum(scores["f1"] * scores["support"]) / total)


def accuracy(confusion) -> float:
    """trace / total"""
    cm = _checked(confusion)
    total = cm.sum()
    return float(np.trace(cm) / total) if total > 0 else 0.0


@dataclass(frozen=True)
class MetricSummary:
    accuracy: float
    macro_f1: float
    weighted_f1: float

    @classmethod
    def of(cls, confusion) -> "MetricSummary":
        return cls(accuracy(confusion), macro_f1(confusion), weighted_f1(confusion))

    def to_dict(self) -> Dict[str, float]:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "weighted_f1": self.weighted_f1}
