"""Condition indicators, anomaly thresholds and the classification rule."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from mcgae.constraints import BallConfig
from mcgae.errors import UndefinedMetricError
from mcgae.models import BoolArray, FloatArray, IntArray, ModelKind
from mcgae.network import AutoencoderState
from mcgae.training import CenterState

logger = logging.getLogger(__name__)

NORMAL_PREDICTION = -1
ANOMALOUS_PREDICTION = 1

# s(median) = 0.25 and s(p99) = 0.5; the threshold is where s reaches 0.6.
_SIGMOID_LOW = 0.25
_SIGMOID_CUT = 0.6


def ci(
    model_kind: ModelKind,
    state: AutoencoderState,
    X: FloatArray,
    center: CenterState | None = None,
) -> FloatArray:
    """Squared distance of each encoding to c (AE-DSVDD) or to the origin."""
    if (model_kind == "AE_DSVDD") != (center is not None):
        raise ValueError("a center is required for AE_DSVDD and only for AE_DSVDD")
    z = state.encode(X)
    if center is not None:
        z = z - center.c
    return np.sum(z**2, axis=1)


def classify(ci_values: FloatArray | float, T: float) -> IntArray:
    """1 where CI > T, −1 otherwise (CI == T counts as normal)."""
    return np.where(np.asarray(ci_values) > T, ANOMALOUS_PREDICTION, NORMAL_PREDICTION)


def t_train(normal_cis: FloatArray) -> float:
    """μ + 3σ over the normal training CIs (population σ)."""
    values = np.asarray(normal_cis, dtype=np.float64)
    if values.size < 2:
        raise ValueError(f"T_train needs at least 2 CI values, got {values.size}")
    return float(values.mean() + 3.0 * values.std())


def fit_sigmoid(normal_cis: FloatArray) -> tuple[float, float] | None:
    """Logistic (a, b) with s(median) = 0.25 and s(p99) = 0.5.

    None when the median equals the 99th percentile.
    """
    values = np.asarray(normal_cis, dtype=np.float64)
    if values.size < 2:
        raise ValueError(f"T_sigmoid needs at least 2 CI values, got {values.size}")
    median, p99 = np.percentile(values, [50.0, 99.0])
    if not p99 > median:
        return None
    b = float(p99 - median) / math.log(1.0 / _SIGMOID_LOW - 1.0)
    return float(p99), b


def t_sigmoid(normal_cis: FloatArray) -> float:
    if np.asarray(normal_cis).size < 100:
        logger.info("fitting T_sigmoid on fewer than 100 CI values")
    fit = fit_sigmoid(normal_cis)
    if fit is None:
        logger.warning("degenerate sigmoid fit (median == p99), using T_train")
        return t_train(normal_cis)
    a, b = fit
    return a + b * math.log(_SIGMOID_CUT / (1.0 - _SIGMOID_CUT))


def t_fixed(ball: BallConfig, n_normal: int, n_anomalous: int) -> float:
    """R1 + (R2 − R1)·A/(N + A)."""
    if n_normal < 0 or n_anomalous < 0 or n_normal + n_anomalous == 0:
        raise ValueError("T_fixed needs N + A > 0 with nonnegative counts")
    return ball.r1 + (ball.r2 - ball.r1) * n_anomalous / (n_normal + n_anomalous)


def _ba_at(cis: FloatArray, anomalous: BoolArray, T: float) -> float:
    predicted = cis > T
    tpr = np.count_nonzero(predicted & anomalous) / np.count_nonzero(anomalous)
    tnr = np.count_nonzero(~predicted & ~anomalous) / np.count_nonzero(~anomalous)
    return 0.5 * (tpr + tnr)


def t_opt(test_cis: FloatArray, anomalous: BoolArray) -> float:
    """Test-set threshold maximizing balanced accuracy.

    Candidates are the midpoints between consecutive distinct CIs plus one
    sentinel below the minimum and one above the maximum. Ties go to the
    candidate farthest from its nearest CI, then to the smaller value.
    """
    cis = np.asarray(test_cis, dtype=np.float64)
    anomalous = np.asarray(anomalous, dtype=bool)
    if not np.any(anomalous) or np.all(anomalous):
        raise UndefinedMetricError("T_opt", "both classes must be present")
    distinct = np.unique(cis)
    gaps = np.diff(distinct)
    sentinel_gap = float(gaps.max()) if gaps.size else 1.0
    candidates = np.concatenate(
        [
            [distinct[0] - sentinel_gap / 2],
            (distinct[:-1] + distinct[1:]) / 2,
            [distinct[-1] + sentinel_gap / 2],
        ],
    )
    margins = np.concatenate([[sentinel_gap / 2], gaps / 2, [sentinel_gap / 2]])
    if candidates[0] < 0:
        if distinct[0] > 0:
            candidates[0] = 0.0
        else:
            # a CI of 0 would flip to normal at T = 0; the above-max sentinel
            # scores the same BA of 0.5
            candidates, margins = candidates[1:], margins[1:]
    best: tuple[float, float, float] | None = None
    for T, margin in zip(candidates, margins, strict=True):
        key = (_ba_at(cis, anomalous, T), float(margin), -float(T))
        if best is None or key > best:
            best = key
    assert best is not None
    return -best[2]


def t_diff(T_opt: float, T: float) -> float:
    """(T_opt − T)/T_opt; negative when T sits above the optimum."""
    if not T_opt > 0:
        raise UndefinedMetricError("T_diff", f"T_opt must be > 0, got {T_opt}")
    return (T_opt - T) / T_opt


@dataclass(frozen=True)
class ThresholdSet:
    T_train: float
    T_sigmoid: float
    T_opt: float
    T_fixed: float | None = None

    def items(self) -> list[tuple[str, float]]:
        return [(k, v) for k, v in asdict(self).items() if v is not None]

    def to_dict(self) -> dict[str, float | None]:
        return asdict(self)

    @classmethod
    def for_model(
        cls,
        model_kind: ModelKind,
        normal_train_cis: FloatArray,
        test_cis: FloatArray,
        test_anomalous: BoolArray,
        ball: BallConfig | None = None,
        counts: tuple[int, int] | None = None,
    ) -> ThresholdSet:
        """All thresholds that apply to a model; T_fixed for CGAE/MCGAE only.

        `counts` is (N, A), the number of labeled normal and anomalous
        training samples.
        """
        fixed = None
        if model_kind != "AE_DSVDD":
            if ball is None or counts is None:
                raise ValueError("T_fixed needs the ball radii and (N, A) counts")
            fixed = t_fixed(ball, *counts)
        return cls(
            T_train=t_train(normal_train_cis),
            T_sigmoid=t_sigmoid(normal_train_cis),
            T_opt=t_opt(test_cis, test_anomalous),
            T_fixed=fixed,
        )
