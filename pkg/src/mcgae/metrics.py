"""Balanced accuracy, Spearman's ρ and fold/seed aggregation."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from mcgae.errors import UndefinedMetricError
from mcgae.models import BoolArray, FloatArray, IntArray
from mcgae.thresholds import ANOMALOUS_PREDICTION


@dataclass(frozen=True)
class ConfusionCounts:
    """Anomalous is the positive class."""

    TP: int = 0
    FP: int = 0
    TN: int = 0
    FN: int = 0

    @property
    def total(self) -> int:
        return self.TP + self.FP + self.TN + self.FN


def confusion(predictions: IntArray, anomalous: BoolArray) -> ConfusionCounts:
    """Counts from ±1 predictions against ground-truth anomaly flags."""
    pred = np.asarray(predictions) == ANOMALOUS_PREDICTION
    truth = np.asarray(anomalous, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return ConfusionCounts(
        TP=int(np.count_nonzero(pred & truth)),
        FP=int(np.count_nonzero(pred & ~truth)),
        TN=int(np.count_nonzero(~pred & ~truth)),
        FN=int(np.count_nonzero(~pred & truth)),
    )


def balanced_accuracy(counts: ConfusionCounts) -> float:
    """Mean of the per-class recalls."""
    negatives = counts.TN + counts.FP
    positives = counts.TP + counts.FN
    if negatives == 0 or positives == 0:
        raise UndefinedMetricError("balanced accuracy", "a class is absent")
    return 0.5 * (counts.TN / negatives + counts.TP / positives)


def trivial_baseline(anomalous: Iterable[bool]) -> ConfusionCounts:
    """Counts of the predictor that calls everything anomalous."""
    truth = np.fromiter(anomalous, dtype=bool)
    n_anomalous = int(np.count_nonzero(truth))
    return ConfusionCounts(TP=n_anomalous, FP=truth.size - n_anomalous)


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    defined: bool


def spearman_rho(values: FloatArray, times: FloatArray | IntArray) -> SpearmanResult:
    """Pearson correlation of average ranks.

    Undefined (rho = nan, defined = False) for fewer than 2 samples or when
    either rank vector is constant.
    """
    x = np.asarray(values, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    if x.shape != t.shape or x.ndim != 1:
        raise ValueError(f"expected two equal-length vectors, got {x.shape}, {t.shape}")
    if x.size < 2:
        return SpearmanResult(rho=float("nan"), defined=False)
    rx = rankdata(x) - (x.size + 1) / 2
    rt = rankdata(t) - (t.size + 1) / 2
    denom = np.sqrt(np.sum(rx**2) * np.sum(rt**2))
    if denom == 0.0:
        return SpearmanResult(rho=float("nan"), defined=False)
    rho = float(np.sum(rx * rt) / denom)
    return SpearmanResult(rho=min(1.0, max(-1.0, rho)), defined=True)


def aggregate(values: Iterable[float]) -> tuple[float, float]:
    """(mean, population std) over folds × seeds."""
    arr = np.fromiter(values, dtype=np.float64)
    if arr.size == 0:
        raise UndefinedMetricError("aggregate", "no values")
    return float(arr.mean()), float(arr.std())
