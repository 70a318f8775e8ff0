from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Literal, get_args

import numpy as np
import numpy.typing as npt

from mcgae.errors import ConfigError

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

ModelKind = Literal["AE_DSVDD", "CGAE", "MCGAE"]
ReconSet = Literal["n", "nu", "na", "nua"]
DegradationShape = Literal["linear", "exponential", "piecewise"]

MODEL_KINDS: tuple[str, ...] = get_args(ModelKind)
RECON_SETS: tuple[str, ...] = get_args(ReconSet)
DEGRADATION_SHAPES: tuple[str, ...] = get_args(DegradationShape)


class Label(IntEnum):
    """Per-frame label. Ordered so a valid run is non-decreasing."""

    NORMAL = 0
    UNLABELED = 1
    ANOMALOUS = 2


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature affine map fitted on the normal segment of a run."""

    mean: FloatArray
    scale: FloatArray
    zero_variance: tuple[int, ...] = ()


@dataclass
class Run:
    """One run-to-failure recording."""

    run_id: str
    frames: FloatArray  # (T_r, F)
    timestamps: FloatArray  # seconds, strictly increasing
    p_h: int  # end of the normal segment
    p_f: int  # start of the anomalous segment
    stats: StandardizationStats | None = None
    latent: FloatArray | None = None  # ground-truth degradation, synthetic only

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def t_a(self) -> int:
        return self.p_f

    @property
    def labels(self) -> IntArray:
        labels = np.full(self.n_frames, Label.UNLABELED, dtype=np.int64)
        labels[: self.p_h] = Label.NORMAL
        labels[self.p_f :] = Label.ANOMALOUS
        return labels

    def validate(self) -> None:
        if self.frames.ndim != 2:
            raise ConfigError(self.run_id, "frames must be a (T, F) matrix")
        if not 0 < self.p_h <= self.p_f <= self.n_frames:
            raise ConfigError(
                self.run_id,
                f"cutoffs must satisfy 0 < p_h <= p_f <= T "
                f"(p_h={self.p_h}, p_f={self.p_f}, T={self.n_frames})",
            )
        if self.timestamps.shape != (self.n_frames,):
            raise ConfigError(self.run_id, "one timestamp per frame is required")
        if self.n_frames > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ConfigError(self.run_id, "timestamps must be strictly increasing")


@dataclass(frozen=True)
class SyntheticConfig:
    n_runs: int = 6
    frames_per_run: tuple[int, int] = (800, 1200)
    feature_dim: int = 16
    degradation_shape: DegradationShape = "linear"
    noise_std: float = 0.05
    cutoff_fractions: tuple[float, float] = (0.5, 0.8)
    seed: int = 7

    def validate(self) -> None:
        if self.n_runs < 2:
            raise ConfigError("dataset.n_runs", "at least 2 runs are required")
        lo, hi = self.frames_per_run
        if lo < 2 or hi < lo:
            raise ConfigError("dataset.frames_per_run", f"bad range [{lo}, {hi}]")
        if self.feature_dim < 1:
            raise ConfigError("dataset.feature_dim", "must be positive")
        if self.degradation_shape not in DEGRADATION_SHAPES:
            raise ConfigError(
                "dataset.degradation_shape",
                f"expected one of {DEGRADATION_SHAPES}",
            )
        if self.noise_std < 0:
            raise ConfigError("dataset.noise_std", "must be >= 0")
        f_h, f_f = self.cutoff_fractions
        if not 0 < f_h < f_f < 1:
            raise ConfigError(
                "dataset.cutoff_fractions",
                f"expected 0 < p_h fraction < p_f fraction < 1, got ({f_h}, {f_f})",
            )


@dataclass(frozen=True)
class FoldSpec:
    fold_id: int
    test_run: str
    train_runs: tuple[str, ...]
    anomalous_source_runs: tuple[str, ...]
    validation_fraction: float = 0.25


@dataclass(frozen=True)
class BatchConfig:
    batches_per_epoch: int = 80
    runs_per_batch: int = 5
    labeled_points_per_run: int = 25
    unlabeled_points_per_run: int = 10
    min_points_per_run_for_mono: int = 10

    def validate(self) -> None:
        for name in (
            "batches_per_epoch",
            "runs_per_batch",
            "labeled_points_per_run",
            "unlabeled_points_per_run",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"batches.{name}", "must be positive")
        if self.min_points_per_run_for_mono < 2:
            raise ConfigError("batches.min_points_per_run_for_mono", "must be >= 2")
        if self.labeled_points_per_run < self.min_points_per_run_for_mono:
            # A run without unlabeled points contributes labeled points only.
            raise ConfigError(
                "batches.labeled_points_per_run",
                "must be >= min_points_per_run_for_mono",
            )


@dataclass
class RunSplit:
    """Training/validation frame indices of one training run in a fold."""

    run: Run
    train_idx: IntArray
    val_idx: IntArray
    anomalies_exposed: bool


@dataclass
class Batch:
    """Samples grouped per run, time-ordered within each run."""

    run_ids: npt.NDArray[np.str_]
    frame_idx: IntArray
    X: FloatArray
    labels: IntArray
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def groups(self) -> dict[str, IntArray]:
        """Row indices per run, sorted by frame index."""
        out: dict[str, IntArray] = {}
        for run_id in dict.fromkeys(self.run_ids.tolist()):
            rows = np.flatnonzero(self.run_ids == run_id)
            out[run_id] = rows[np.argsort(self.frame_idx[rows], kind="stable")]
        return out

    def mask(self, *labels: Label) -> BoolArray:
        return np.isin(self.labels, [int(label) for label in labels])
