"""Constraint membership, satisfaction ratios and encoding-space directions.

Directions follow the update convention θ ← θ − η·(... + direction): a
normal-ball direction points away from the origin, so following it in
reverse pulls the encoding inwards.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from mcgae.errors import ConfigError
from mcgae.models import Batch, BoolArray, FloatArray, IntArray, Label

logger = logging.getLogger(__name__)

Family = Literal["normal", "anomalous", "monotonicity"]
FAMILIES: tuple[Family, ...] = ("normal", "anomalous", "monotonicity")


@dataclass(frozen=True)
class BallConfig:
    r1: float = 1.0  # normal data inside B[0, r1]
    r2: float = 2.0  # anomalous data outside B[0, r2]

    def validate(self) -> None:
        if not 0 < self.r1 < self.r2:
            raise ConfigError(
                "train.r1/train.r2",
                f"expected 0 < r1 < r2, got r1={self.r1}, r2={self.r2}",
            )


def check_normal(z: FloatArray, ball: BallConfig) -> bool:
    # A zero-radius ball holds nothing, not even the origin.
    return bool(ball.r1 > 0 and np.linalg.norm(z) <= ball.r1)


def check_anomalous(z: FloatArray, ball: BallConfig) -> bool:
    return bool(np.linalg.norm(z) > ball.r2)


def random_unit(dim: int, rng: np.random.Generator) -> FloatArray:
    """Uniform sample from the unit sphere in R^dim."""
    v = rng.standard_normal(dim)
    while not np.any(v):
        v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _radial(z: FloatArray, rng: np.random.Generator) -> FloatArray:
    norm = np.linalg.norm(z)
    if norm == 0.0:
        return random_unit(z.shape[0], rng)
    return z / norm


def dir_normal(z: FloatArray, ball: BallConfig, rng: np.random.Generator) -> FloatArray:
    if check_normal(z, ball):
        return np.zeros_like(z)
    return _radial(z, rng)


def dir_anomalous(
    z: FloatArray,
    ball: BallConfig,
    rng: np.random.Generator,
) -> FloatArray:
    if check_anomalous(z, ball):
        return np.zeros_like(z)
    return -_radial(z, rng)


def dir_mono(encodings: FloatArray) -> FloatArray:
    """Normalized rank differences of one run's time-ordered encodings.

    Component i is rank(‖z_i‖²) − i, ties ranked by time, scaled to unit L2
    norm. Zero everywhere when the norms are already time-sorted.
    """
    m = encodings.shape[0]
    if m < 2:
        logger.warning("monotonicity direction needs >= 2 samples, got %d", m)
        return np.zeros(m)
    order = np.argsort(np.sum(encodings**2, axis=1), kind="stable")
    ranks = np.empty(m, dtype=np.int64)
    ranks[order] = np.arange(m)
    diff = (ranks - np.arange(m)).astype(np.float64)
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return diff
    return diff / norm


def mono_directions(encodings: FloatArray, rng: np.random.Generator) -> FloatArray:
    """dir_mono coefficients mapped onto each sample's radial unit vector."""
    coeffs = dir_mono(encodings)
    out = np.zeros_like(encodings)
    for i in np.flatnonzero(coeffs):
        out[i] = coeffs[i] * _radial(encodings[i], rng)
    return out


def _mono_groups(batch: Batch) -> dict[str, IntArray]:
    """Per-run rows of samples before the first anomaly, time-ordered."""
    before = batch.labels < Label.ANOMALOUS
    return {
        run_id: rows[before[rows]]
        for run_id, rows in batch.groups().items()
        if np.any(before[rows])
    }


@dataclass
class DirectionBundle:
    normal: FloatArray
    anomalous: FloatArray
    mono: FloatArray
    normal_ok: BoolArray  # True where satisfied or not applicable
    anomalous_ok: BoolArray
    mono_coefficients: dict[str, FloatArray] = field(default_factory=dict)

    def total(self) -> FloatArray:
        """Per-sample sum over constraint families."""
        return self.normal + self.anomalous + self.mono


def compute_directions(
    Z: FloatArray,
    batch: Batch,
    ball: BallConfig,
    rng: np.random.Generator,
    families: Iterable[Family] = FAMILIES,
) -> DirectionBundle:
    active = set(families)
    n = Z.shape[0]
    bundle = DirectionBundle(
        normal=np.zeros_like(Z),
        anomalous=np.zeros_like(Z),
        mono=np.zeros_like(Z),
        normal_ok=np.ones(n, dtype=bool),
        anomalous_ok=np.ones(n, dtype=bool),
    )
    for i in np.flatnonzero(batch.mask(Label.NORMAL)):
        bundle.normal_ok[i] = check_normal(Z[i], ball)
        if "normal" in active:
            bundle.normal[i] = dir_normal(Z[i], ball, rng)
    for i in np.flatnonzero(batch.mask(Label.ANOMALOUS)):
        bundle.anomalous_ok[i] = check_anomalous(Z[i], ball)
        if "anomalous" in active:
            bundle.anomalous[i] = dir_anomalous(Z[i], ball, rng)
    if "monotonicity" in active:
        for run_id, rows in _mono_groups(batch).items():
            bundle.mono_coefficients[run_id] = dir_mono(Z[rows])
            bundle.mono[rows] = mono_directions(Z[rows], rng)
    return bundle


# -- Satisfaction --


@dataclass(frozen=True)
class SatisfactionRatios:
    normal: float | None = None
    anomalous: float | None = None
    monotonicity: float | None = None

    @property
    def combined(self) -> float:
        """Unweighted mean over the families that had instances."""
        values = [
            v for v in (self.normal, self.anomalous, self.monotonicity) if v is not None
        ]
        return float(np.mean(values)) if values else 1.0

    def to_dict(self) -> dict[str, float | None]:
        return {
            "normal": self.normal,
            "anomalous": self.anomalous,
            "monotonicity": self.monotonicity,
            "combined": self.combined,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, float | None]) -> SatisfactionRatios:
        return cls(
            normal=data.get("normal"),
            anomalous=data.get("anomalous"),
            monotonicity=data.get("monotonicity"),
        )


def monotone_pairs(norms: FloatArray, times: IntArray) -> tuple[int, int]:
    """(satisfied, total) ordered pairs t1 < t2 of one run."""
    earlier = times[:, None] < times[None, :]
    increasing = norms[:, None] < norms[None, :]
    return int(np.count_nonzero(earlier & increasing)), int(np.count_nonzero(earlier))


def satisfaction_ratio(
    Z: FloatArray,
    batch: Batch,
    ball: BallConfig,
    families: Iterable[Family] = FAMILIES,
) -> SatisfactionRatios:
    if Z.shape[0] == 0:
        raise ValueError("satisfaction ratio needs a nonempty slice")
    active = set(families)
    norms = np.linalg.norm(Z, axis=1)
    ratios: dict[str, float | None] = {}

    is_normal = batch.mask(Label.NORMAL)
    if "normal" in active and np.any(is_normal):
        ratios["normal"] = float(np.mean(norms[is_normal] <= ball.r1))
    is_anomalous = batch.mask(Label.ANOMALOUS)
    if "anomalous" in active and np.any(is_anomalous):
        ratios["anomalous"] = float(np.mean(norms[is_anomalous] > ball.r2))
    if "monotonicity" in active:
        satisfied = total = 0
        for rows in _mono_groups(batch).values():
            s, t = monotone_pairs(norms[rows], batch.frame_idx[rows])
            satisfied += s
            total += t
        if total:
            ratios["monotonicity"] = satisfied / total
    return SatisfactionRatios(**ratios)
