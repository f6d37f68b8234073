"""Masked accuracy, micro-averaged F1 and multi-run aggregation."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError


@dataclass
class MetricReport:
    metric: str
    value: float
    count: int = 0
    per_run: list = field(default_factory=list)
    std: float = 0.0

    @property
    def mean(self):
        return self.value

    def to_dict(self):
        return {
            "metric": self.metric,
            "mean": self.value,
            "std": self.std,
            "runs": len(self.per_run) if self.per_run else 1,
            "per_run": list(self.per_run) if self.per_run else [self.value],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _mask(mask, n):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeError(f"mask must have {n} entries, got {mask.shape}")
    if not mask.any():
        raise DataError("metric mask selects no nodes")
    return mask


def masked_accuracy(logits, labels, mask):
    """Share of masked nodes whose argmax logit (lowest index on ties) is the label."""
    mask = _mask(mask, logits.shape[0])
    pred = np.argmax(logits[mask], axis=1)
    correct = int(np.sum(pred == np.asarray(labels)[mask]))
    count = int(mask.sum())
    return MetricReport("accuracy", correct / count, count)


def f1_counts(logits, label_matrix, mask, threshold=0.5):
    mask = _mask(mask, logits.shape[0])
    # sigmoid(z) >= t  <=>  z >= logit(t)
    if threshold <= 0.0:
        pred = np.ones(logits[mask].shape, dtype=bool)
    elif threshold >= 1.0:
        pred = np.zeros(logits[mask].shape, dtype=bool)
    else:
        pred = logits[mask] >= np.log(threshold / (1.0 - threshold))
    truth = np.asarray(label_matrix)[mask].astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return tp, fp, fn


def f1_from_counts(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def micro_f1(logits, label_matrix, mask, threshold=0.5):
    """F1 with TP/FP/FN pooled over every masked (node, label) pair."""
    tp, fp, fn = f1_counts(logits, label_matrix, mask, threshold)
    return MetricReport("micro_f1", f1_from_counts(tp, fp, fn), int(np.asarray(mask, bool).sum()))


def aggregate(metric, values):
    """Mean and sample (n - 1) standard deviation across runs."""
    values = [float(v) for v in values]
    if not values:
        raise DataError("nothing to aggregate")
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return MetricReport(metric, float(np.mean(values)), len(values), values, std)
