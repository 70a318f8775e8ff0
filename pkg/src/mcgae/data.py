"""Synthetic run-to-failure data, per-run preprocessing, folds and batching.

Every function here is a pure function of its inputs and seed. Batch streams
own their generator, so several streams can be consumed side by side.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import replace
from typing import Literal

import numpy as np

from mcgae.errors import ConfigError
from mcgae.models import (
    Batch,
    BatchConfig,
    FloatArray,
    FoldSpec,
    IntArray,
    Label,
    Run,
    RunSplit,
    StandardizationStats,
    SyntheticConfig,
)

logger = logging.getLogger(__name__)

# Features whose pre-p_h spread falls under this (relative) level are constant.
_ZERO_STD = 1e-12


# -- Generation --


def _degradation(shape: str, n: int, rng: np.random.Generator) -> FloatArray:
    """Latent degradation level in [0, ~1.2], strictly increasing in time."""
    tau = np.linspace(0.0, 1.0, n)
    if shape == "linear":
        return rng.uniform(0.8, 1.2) * tau
    if shape == "exponential":
        k = rng.uniform(3.0, 5.0)
        return np.expm1(k * tau) / np.expm1(k)
    # piecewise: slow wear until an onset, then fast growth
    onset = rng.uniform(0.3, 0.5)
    return 0.2 * tau + 1.8 * np.maximum(tau - onset, 0.0)


def generate_dataset(config: SyntheticConfig) -> list[Run]:
    """Generate raw (unstandardized) runs.

    Features are a fixed mixing W·[d(t), 1] of the latent degradation d(t)
    plus Gaussian noise. W has positive entries, so without noise the mean
    feature energy grows strictly with d(t).
    """
    config.validate()
    lo, hi = config.frames_per_run
    f_h, f_f = config.cutoff_fractions

    mix_seq, *run_seqs = np.random.SeedSequence(config.seed).spawn(config.n_runs + 1)
    mix_rng = np.random.default_rng(mix_seq)
    mixing = np.column_stack(
        [
            mix_rng.uniform(0.5, 1.5, size=config.feature_dim),
            mix_rng.uniform(0.0, 1.0, size=config.feature_dim),
        ],
    )

    runs: list[Run] = []
    for i, seq in enumerate(run_seqs):
        rng = np.random.default_rng(seq)
        n = int(rng.integers(lo, hi + 1))
        latent = _degradation(config.degradation_shape, n, rng)
        basis = np.column_stack([latent, np.ones(n)])
        noise = rng.normal(0.0, 1.0, size=(n, config.feature_dim)) * config.noise_std
        p_h = min(max(1, round(f_h * n)), n)
        p_f = min(max(p_h, round(f_f * n)), n)
        run = Run(
            run_id=f"run-{i:02d}",
            frames=basis @ mixing.T + noise,
            timestamps=np.arange(n, dtype=np.float64),
            p_h=p_h,
            p_f=p_f,
            latent=latent,
        )
        run.validate()
        runs.append(run)
    return runs


# -- Preprocessing --


def standardize_run(run: Run) -> Run:
    """Standardize a run with the statistics of its normal segment.

    Constant features get scale 1. Applying this to an already standardized
    run leaves it unchanged up to rounding; the stored stats compose so they
    always describe the map from the original features.
    """
    if run.p_h < 2:
        raise ConfigError(run.run_id, "need at least 2 normal frames to standardize")
    normal = run.frames[: run.p_h]
    mean = normal.mean(axis=0)
    scale = normal.std(axis=0)
    zero = np.flatnonzero(scale <= _ZERO_STD * np.maximum(1.0, np.abs(mean)))
    if zero.size:
        logger.warning(
            "%s: zero-variance feature(s) %s before p_h; using scale 1",
            run.run_id,
            zero.tolist(),
        )
        scale[zero] = 1.0

    stats = StandardizationStats(mean=mean, scale=scale, zero_variance=tuple(zero))
    if run.stats is not None:
        prev = run.stats
        stats = StandardizationStats(
            mean=prev.mean + prev.scale * mean,
            scale=prev.scale * scale,
            zero_variance=tuple(sorted({*prev.zero_variance, *stats.zero_variance})),
        )
    return replace(run, frames=(run.frames - mean) / scale, stats=stats)


def frame_run(run: Run, window: int, stride: int | None = None) -> Run:
    """Concatenate `window` consecutive frames into one input frame.

    A window takes the highest label among its members (anomalous over
    unlabeled over normal); its timestamp is that of its first member.
    """
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ConfigError("dataset.window", "window and stride must be >= 1")
    if run.n_frames < window:
        raise ConfigError(
            "dataset.window",
            f"{run.run_id} has {run.n_frames} frames, fewer than window={window}",
        )
    if window == 1 and stride == 1:
        return run

    starts = np.arange(0, run.n_frames - window + 1, stride)
    idx = starts[:, None] + np.arange(window)[None, :]
    labels = run.labels[idx].max(axis=1)
    p_h = int(np.count_nonzero(labels == Label.NORMAL))
    p_f = int(np.count_nonzero(labels < Label.ANOMALOUS))
    if p_h == 0:
        raise ConfigError(
            "dataset.window",
            f"{run.run_id}: no window lies fully inside the normal segment",
        )
    return replace(
        run,
        frames=run.frames[idx].reshape(len(starts), window * run.feature_dim),
        timestamps=run.timestamps[starts],
        p_h=p_h,
        p_f=p_f,
        latent=None if run.latent is None else run.latent[idx[:, -1]],
    )


# -- Folds --


def build_folds(
    runs: Sequence[Run],
    n_anomalous_runs: int,
    seed: int = 0,
) -> list[FoldSpec]:
    """Leave-one-run-out folds, exposing anomalies of n_anomalous_runs runs.

    The exposed runs of a fold come from one fixed permutation per fold, so
    raising n_anomalous_runs only ever adds runs to the exposed set.
    """
    ids = [run.run_id for run in runs]
    if not 1 <= n_anomalous_runs <= len(ids) - 1:
        raise ConfigError(
            "experiment.anomalous_run_counts",
            f"{n_anomalous_runs} not in [1, {len(ids) - 1}] for {len(ids)} runs",
        )
    folds: list[FoldSpec] = []
    for fold_id, test_run in enumerate(ids):
        train = [run_id for run_id in ids if run_id != test_run]
        order = np.random.default_rng([seed, fold_id]).permutation(len(train))
        chosen = set(order[:n_anomalous_runs].tolist())
        folds.append(
            FoldSpec(
                fold_id=fold_id,
                test_run=test_run,
                train_runs=tuple(train),
                anomalous_source_runs=tuple(
                    run_id for j, run_id in enumerate(train) if j in chosen
                ),
            ),
        )
    return folds


def split_fold(
    fold: FoldSpec,
    runs: Mapping[str, Run],
    seed: int = 0,
) -> list[RunSplit]:
    """Split every training run of a fold into train/validation frames.

    The split is stratified per run and per label. Anomalies of runs that are
    not anomaly sources are left out of both parts.
    """
    splits: list[RunSplit] = []
    for j, run_id in enumerate(fold.train_runs):
        run = runs[run_id]
        labels = run.labels
        exposed = run_id in fold.anomalous_source_runs
        groups = [Label.NORMAL, Label.UNLABELED]
        if exposed:
            groups.append(Label.ANOMALOUS)

        rng = np.random.default_rng([seed, fold.fold_id, j])
        train_parts: list[IntArray] = []
        val_parts: list[IntArray] = []
        for label in groups:
            idx = np.flatnonzero(labels == label)
            n_val = round(fold.validation_fraction * idx.size)
            picked = np.zeros(idx.size, dtype=bool)
            picked[rng.choice(idx.size, size=n_val, replace=False)] = True
            val_parts.append(idx[picked])
            train_parts.append(idx[~picked])
        splits.append(
            RunSplit(
                run=run,
                train_idx=np.sort(np.concatenate(train_parts)),
                val_idx=np.sort(np.concatenate(val_parts)),
                anomalies_exposed=exposed,
            ),
        )
    return splits


def split_batch(splits: Sequence[RunSplit], part: Literal["train", "val"]) -> Batch:
    """All frames of one split part as a single time-ordered batch."""
    run_ids: list[str] = []
    frame_idx: list[IntArray] = []
    for split in splits:
        idx = split.train_idx if part == "train" else split.val_idx
        run_ids.extend([split.run.run_id] * idx.size)
        frame_idx.append(idx)
    return _assemble(splits, np.array(run_ids, dtype=str), frame_idx)


def _assemble(
    splits: Sequence[RunSplit],
    run_ids: np.ndarray,
    frame_idx: list[IntArray],
    warnings: list[str] | None = None,
) -> Batch:
    by_id = {split.run.run_id: split.run for split in splits}
    idx = np.concatenate(frame_idx) if frame_idx else np.empty(0, dtype=np.int64)
    rows: list[FloatArray] = []
    labels: list[IntArray] = []
    offset = 0
    for part in frame_idx:
        if part.size == 0:
            continue
        run = by_id[str(run_ids[offset])]
        rows.append(run.frames[part])
        labels.append(run.labels[part])
        offset += part.size
    dim = splits[0].run.feature_dim if splits else 0
    return Batch(
        run_ids=run_ids,
        frame_idx=idx.astype(np.int64),
        X=np.concatenate(rows) if rows else np.empty((0, dim)),
        labels=np.concatenate(labels) if labels else np.empty(0, dtype=np.int64),
        warnings=warnings or [],
    )


# -- Batching --


def _draw(rng: np.random.Generator, pool: IntArray, k: int) -> IntArray:
    return rng.choice(pool, size=k, replace=pool.size < k)


def sample_epoch(
    splits: Sequence[RunSplit],
    bc: BatchConfig,
    rng: np.random.Generator,
) -> Iterator[Batch]:
    """Yield one epoch of run-stratified batches.

    Each batch picks runs without replacement, then labeled (normal or exposed
    anomalous) and unlabeled training frames from each picked run. Frames may
    recur across batches of the same epoch.
    """
    pools: list[tuple[IntArray, IntArray]] = []
    for split in splits:
        labels = split.run.labels[split.train_idx]
        labeled = split.train_idx[labels != Label.UNLABELED]
        unlabeled = split.train_idx[labels == Label.UNLABELED]
        if labeled.size + unlabeled.size < bc.min_points_per_run_for_mono:
            raise ConfigError(
                "batches.min_points_per_run_for_mono",
                f"{split.run.run_id} has only "
                f"{labeled.size + unlabeled.size} usable training frames",
            )
        if labeled.size == 0:
            raise ConfigError(
                "batches.labeled_points_per_run",
                f"{split.run.run_id} has no labeled training frames",
            )
        pools.append((labeled, unlabeled))

    missing = [
        split.run.run_id
        for split, (_, unlabeled) in zip(splits, pools, strict=True)
        if not unlabeled.size
    ]
    if missing:
        logger.warning(
            "runs without unlabeled frames, drawing labeled frames only: %s",
            ", ".join(missing),
        )

    k = min(bc.runs_per_batch, len(splits))
    for _ in range(bc.batches_per_epoch):
        chosen = np.sort(rng.choice(len(splits), size=k, replace=False))
        run_ids: list[str] = []
        frame_idx: list[IntArray] = []
        warnings: list[str] = []
        for j in chosen:
            labeled, unlabeled = pools[j]
            picked = _draw(rng, labeled, bc.labeled_points_per_run)
            if unlabeled.size:
                picked = np.concatenate(
                    [picked, _draw(rng, unlabeled, bc.unlabeled_points_per_run)],
                )
            else:
                warnings.append(f"{splits[j].run.run_id}: no unlabeled frames")
            picked = np.sort(picked, kind="stable")
            run_ids.extend([splits[j].run.run_id] * picked.size)
            frame_idx.append(picked)
        yield _assemble(splits, np.array(run_ids, dtype=str), frame_idx, warnings)


def sample_batches(
    splits: Sequence[RunSplit],
    bc: BatchConfig,
    rng_seed: int | Sequence[int],
    epochs: int = 1,
) -> Iterator[Batch]:
    """Chain `epochs` epochs from a generator seeded with rng_seed."""
    rng = np.random.default_rng(rng_seed)
    for _ in range(epochs):
        yield from sample_epoch(splits, bc, rng)
