"""Binary veracity metrics.

Both polarities are reported: "true news as positive" and "fake news as
positive". F1-macro is the unweighted mean of the two class F1 scores;
F1-micro pools all decisions, which for single-label binary equals
accuracy. The stored confusion counts take fake (label 1) as positive.
"""

from __future__ import annotations

from dataclasses import dataclass


class MetricsError(Exception):
    pass


def _prf(tp: int, fp: int, fn: int):
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class MetricsReport:
    f1_macro: float
    f1_micro: float
    true_precision: float
    true_recall: float
    true_f1: float
    fake_precision: float
    fake_recall: float
    fake_f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return {
            "f1_macro": self.f1_macro,
            "f1_micro": self.f1_micro,
            "true_precision": self.true_precision,
            "true_recall": self.true_recall,
            "true_f1": self.true_f1,
            "fake_precision": self.fake_precision,
            "fake_recall": self.fake_recall,
            "fake_f1": self.fake_f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
        }


def compute_metrics(labels, predictions) -> MetricsReport:
    """Metrics from per-instance gold labels and predicted labels (0/1)."""
    labels = list(labels)
    predictions = list(predictions)
    if not labels or len(labels) != len(predictions):
        raise MetricsError("labels and predictions must be equal-length and non-empty")
    if any(v not in (0, 1) for v in labels + predictions):
        raise MetricsError("labels and predictions must be 0 or 1")
    tp = sum(1 for y, p in zip(labels, predictions) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, predictions) if y == 0 and p == 1)
    fn = sum(1 for y, p in zip(labels, predictions) if y == 1 and p == 0)
    tn = sum(1 for y, p in zip(labels, predictions) if y == 0 and p == 0)
    fake_p, fake_r, fake_f1 = _prf(tp, fp, fn)
    true_p, true_r, true_f1 = _prf(tn, fn, fp)
    return MetricsReport(
        f1_macro=(true_f1 + fake_f1) / 2.0,
        f1_micro=(tp + tn) / len(labels),
        true_precision=true_p,
        true_recall=true_r,
        true_f1=true_f1,
        fake_precision=fake_p,
        fake_recall=fake_r,
        fake_f1=fake_f1,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )
