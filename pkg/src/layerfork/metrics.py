"""Evaluation metrics: accuracy, Matthews correlation, Pearson correlation."""

from __future__ import annotations

import math

from .errors import DataError


def accuracy(preds, labels) -> float:
    preds, labels = list(preds), list(labels)
    if len(preds) != len(labels):
        raise DataError("accuracy: length mismatch")
    if not preds:
        raise DataError("accuracy: empty input")
    return sum(int(p == y) for p, y in zip(preds, labels)) / len(preds)


def matthews(preds, labels) -> float:
    """MCC for binary predictions; degenerate denominator yields 0.0."""
    preds, labels = list(preds), list(labels)
    if len(preds) != len(labels):
        raise DataError("matthews: length mismatch")
    if any(v not in (0, 1) for v in preds + labels):
        raise DataError("matthews: inputs must be binary")
    tp = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 1)
    tn = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 0)
    fp = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 1)
    denom = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / denom


def pearson(x, y) -> float:
    """Sample Pearson correlation; constant input yields 0.0 by convention."""
    x, y = [float(v) for v in x], [float(v) for v in y]
    if len(x) != len(y):
        raise DataError("pearson: length mismatch")
    if len(x) < 2:
        raise DataError("pearson: need at least 2 points")
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(sxx * syy)


METRICS = {"accuracy": accuracy, "matthews": matthews, "pearson": pearson}


def evaluate_metric(name: str, preds, labels) -> float:
    try:
        fn = METRICS[name]
    except KeyError:
        raise DataError(f"unknown metric {name!r}") from None
    return fn(preds, labels)
