from __future__ import annotations

import math

import numpy as np
import pytest

from mcgae.errors import UndefinedMetricError
from mcgae.metrics import (
    ConfusionCounts,
    aggregate,
    balanced_accuracy,
    confusion,
    spearman_rho,
    trivial_baseline,
)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties share the mean of their positions."""
    less = (values[None, :] < values[:, None]).sum(axis=1)
    equal = (values[None, :] == values[:, None]).sum(axis=1)
    return less + (equal + 1) / 2


def _rank_pearson(x: np.ndarray, t: np.ndarray) -> float:
    rx = _average_ranks(x)
    rt = _average_ranks(t)
    rx = rx - rx.mean()
    rt = rt - rt.mean()
    return float(np.sum(rx * rt) / math.sqrt(np.sum(rx**2) * np.sum(rt**2)))


# -- Balanced accuracy --


def test_confusion_counts() -> None:
    predictions = np.array([1, 1, -1, -1, 1])
    anomalous = np.array([True, False, False, True, True])
    counts = confusion(predictions, anomalous)
    assert counts == ConfusionCounts(TP=2, FP=1, TN=1, FN=1)
    assert counts.total == 5
    with pytest.raises(ValueError):
        confusion(predictions, anomalous[:3])


def test_balanced_accuracy_examples() -> None:
    assert balanced_accuracy(ConfusionCounts(TP=8, FP=10, TN=90, FN=2)) == pytest.approx(0.85)
    assert balanced_accuracy(ConfusionCounts(TP=5, TN=7)) == 1.0


def test_balanced_accuracy_undefined_without_a_class() -> None:
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy(ConfusionCounts(TP=3, FN=1))
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy(ConfusionCounts(TN=3, FP=1))


def test_trivial_baseline() -> None:
    counts = trivial_baseline([True] * 10 + [False] * 10)
    assert counts == ConfusionCounts(TP=10, FP=10)
    assert balanced_accuracy(counts) == 0.5
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy(trivial_baseline([True, True]))
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy(trivial_baseline([False, False]))


def test_trivial_baseline_is_always_half() -> None:
    rng = np.random.default_rng(8)
    for _ in range(200):
        truth = rng.random(int(rng.integers(2, 50))) < rng.uniform(0.05, 0.95)
        truth[0], truth[1] = True, False
        assert balanced_accuracy(trivial_baseline(truth)) == 0.5


# -- Spearman --


def test_spearman_examples() -> None:
    times = np.arange(4)
    assert spearman_rho(np.array([0.1, 0.4, 0.5, 2.0]), times).rho == 1.0
    assert spearman_rho(np.array([2.0, 0.5, 0.4, 0.1]), times).rho == -1.0
    tied = spearman_rho(np.array([1.0, 2.0, 2.0, 4.0]), times)
    assert tied.defined
    assert tied.rho == pytest.approx(0.9487, abs=1e-4)


def test_spearman_undefined() -> None:
    single = spearman_rho(np.array([1.0]), np.array([0.0]))
    assert not single.defined and math.isnan(single.rho)
    constant = spearman_rho(np.full(5, 0.3), np.arange(5))
    assert not constant.defined
    with pytest.raises(ValueError):
        spearman_rho(np.zeros(3), np.zeros(4))


def test_spearman_matches_rank_pearson_oracle() -> None:
    rng = np.random.default_rng(21)
    checked = 0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        x = rng.integers(0, 6, size=n).astype(np.float64)  # plenty of ties
        t = np.sort(rng.uniform(0, 100, size=n))
        result = spearman_rho(x, t)
        if np.all(x == x[0]):
            assert not result.defined
            continue
        assert result.defined
        assert abs(result.rho - _rank_pearson(x, t)) <= 1e-12
        checked += 1
    assert checked > 900


def test_spearman_matches_rank_difference_formula_without_ties() -> None:
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        x = rng.permutation(n).astype(np.float64) + rng.uniform(0, 0.5, size=n)
        t = np.arange(n, dtype=np.float64)
        d = _average_ranks(x) - _average_ranks(t)
        expected = 1 - 6 * np.sum(d**2) / (n * (n**2 - 1))
        assert abs(spearman_rho(x, t).rho - expected) <= 1e-12


def test_spearman_invariant_under_monotone_transform() -> None:
    rng = np.random.default_rng(6)
    x = rng.normal(size=50)
    t = np.arange(50)
    rho = spearman_rho(x, t).rho
    assert spearman_rho(np.exp(x), t).rho == pytest.approx(rho, abs=1e-12)
    assert spearman_rho(3 * x + 7, t).rho == pytest.approx(rho, abs=1e-12)


# -- Aggregation --


def test_aggregate_examples() -> None:
    assert aggregate([0.7]) == (0.7, 0.0)
    assert aggregate([0.0, 2.0]) == (1.0, 1.0)
    mean, _ = aggregate([0.891, 0.926, 0.931])
    assert mean == pytest.approx(0.916, abs=5e-4)
    with pytest.raises(UndefinedMetricError):
        aggregate([])
