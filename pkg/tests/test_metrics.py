"""Metrics against independent reference implementations."""

import numpy as np
import pytest
from scipy import stats
from sklearn.metrics import matthews_corrcoef

from layerfork.errors import DataError
from layerfork.metrics import accuracy, evaluate_metric, matthews, pearson


def test_accuracy_basic():
    assert accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75
    with pytest.raises(DataError):
        accuracy([1], [1, 0])
    with pytest.raises(DataError):
        accuracy([], [])


def test_matthews_hand_case():
    # tp=3 tn=2 fp=1 fn=1: (6-1)/sqrt(4*4*3*3) = 5/12
    preds = [1, 1, 1, 1, 0, 0, 0]
    labels = [1, 1, 1, 0, 0, 0, 1]
    np.testing.assert_allclose(matthews(preds, labels), 5 / 12, atol=1e-12)


def test_matthews_degenerate_returns_zero():
    assert matthews([1, 1, 1], [1, 0, 1]) == 0.0
    assert matthews([0, 1, 0], [1, 1, 1]) == 0.0


def test_matthews_rejects_non_binary():
    with pytest.raises(DataError):
        matthews([0, 2], [0, 1])


def test_matthews_matches_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(4, 40))
        preds = rng.integers(0, 2, n)
        labels = rng.integers(0, 2, n)
        want = matthews_corrcoef(labels, preds)
        np.testing.assert_allclose(matthews(preds.tolist(), labels.tolist()),
                                   want, atol=1e-12)


def test_pearson_hand_case():
    np.testing.assert_allclose(pearson([1, 2, 3, 4], [1.1, 1.9, 3.2, 3.8]),
                               stats.pearsonr([1, 2, 3, 4], [1.1, 1.9, 3.2, 3.8])[0],
                               atol=1e-12)


def test_pearson_constant_returns_zero():
    assert pearson([1.0, 1.0, 1.0], [0.3, 0.5, 0.9]) == 0.0


def test_pearson_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(3, 50))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        np.testing.assert_allclose(pearson(x, y), stats.pearsonr(x, y)[0],
                                   atol=1e-12)


def test_pearson_input_validation():
    with pytest.raises(DataError):
        pearson([1.0], [2.0])
    with pytest.raises(DataError):
        pearson([1, 2], [1, 2, 3])


def test_evaluate_metric_dispatch():
    assert evaluate_metric("accuracy", [1], [1]) == 1.0
    with pytest.raises(DataError):
        evaluate_metric("f1", [1], [1])
