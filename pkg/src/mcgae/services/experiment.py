"""Experiment jobs that coordinate data, training, evaluation and storage."""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from mcgae.config import DatasetSettings, ExperimentSpec
from mcgae.constraints import satisfaction_ratio
from mcgae.data import (
    build_folds,
    frame_run,
    generate_dataset,
    split_batch,
    split_fold,
    standardize_run,
)
from mcgae.errors import ConfigError, OutputExistsError, UndefinedMetricError
from mcgae.metrics import (
    aggregate,
    balanced_accuracy,
    confusion,
    spearman_rho,
    trivial_baseline,
)
from mcgae.models import Label, ModelKind, ReconSet, Run, RunSplit
from mcgae.storage import (
    Checkpoint,
    load_dataset,
    read_json,
    save_checkpoint,
    write_bytes_atomic,
    write_history,
    write_json,
)
from mcgae.thresholds import ThresholdSet, ci, classify, t_diff
from mcgae.training import TrainConfig, TrainResult, train

logger = logging.getLogger(__name__)

FOLD_SEED = 0  # anomaly-source selection and validation split, shared by all seeds

JOBS_DIR = "jobs"
CHECKPOINTS_DIR = "checkpoints"
HISTORIES_DIR = "histories"
REPORT_FILE = "report.json"


# -- Jobs --


@dataclass(frozen=True, order=True)
class JobKey:
    method: ModelKind
    recon_set: ReconSet
    n_anomalous: int
    fold: int
    seed: int

    @property
    def slug(self) -> str:
        return (
            f"{self.method}-{self.recon_set}-a{self.n_anomalous}"
            f"-f{self.fold}-s{self.seed}"
        )

    @property
    def cell(self) -> tuple[str, str, int]:
        return (self.method, self.recon_set, self.n_anomalous)


@dataclass
class JobResult:
    key: JobKey
    test_run: str
    anomalous_source_runs: list[str]
    checkpoint: str
    checkpoint_epoch: int
    counts: tuple[int, int]  # labeled (normal, anomalous) training samples
    thresholds: dict[str, float | None]
    ba: dict[str, float]
    ba_trivial: float
    t_diff: dict[str, float | None]
    spearman_test: float | None
    spearman_train: float | None
    spearman_train_runs: dict[str, float | None]
    train_ratios: dict[str, float | None] | None
    traces: dict[str, list[float]] = field(default_factory=dict)
    config_hash: str | None = None  # ExperimentSpec.fingerprint of the training run

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["counts"] = list(self.counts)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> JobResult:
        values = dict(data)
        values["key"] = JobKey(**values["key"])
        values["counts"] = tuple(values["counts"])
        return cls(**values)


def prepare_dataset(settings: DatasetSettings) -> list[Run]:
    """Load (or generate and standardize) the runs, then frame them."""
    if settings.path is not None:
        runs = load_dataset(settings.path)
    else:
        runs = [standardize_run(run) for run in generate_dataset(settings.synthetic)]
    if settings.window > 1 or settings.stride not in (None, 1):
        runs = [frame_run(run, settings.window, settings.stride) for run in runs]
    return runs


def plan_jobs(
    spec: ExperimentSpec,
    n_runs: int,
    methods: Iterable[str] | None = None,
    recon_sets: Iterable[str] | None = None,
) -> list[JobKey]:
    """Every (method, recon_set, n_anomalous, fold, seed) job in a fixed order."""
    exp = spec.experiment
    folds = exp.folds if exp.folds is not None else tuple(range(n_runs))
    for fold in folds:
        if not 0 <= fold < n_runs:
            raise ConfigError("experiment.folds", f"fold {fold} not in [0, {n_runs})")
    for n in exp.anomalous_run_counts:
        if n > n_runs - 1:
            raise ConfigError(
                "experiment.anomalous_run_counts",
                f"{n} anomalous runs need at least {n + 1} runs, have {n_runs}",
            )
    return [
        JobKey(method, recon_set, n, fold, seed)  # type: ignore[arg-type]
        for method in (methods or exp.methods)
        for recon_set in (recon_sets or exp.recon_sets)
        for n in exp.anomalous_run_counts
        for fold in folds
        for seed in exp.seeds
    ]


def job_config(spec: ExperimentSpec, key: JobKey) -> TrainConfig:
    return replace(
        spec.train,
        model_kind=key.method,
        recon_set=key.recon_set,
        seed=key.seed,
    )


def _undefined_to_none(fn: Callable[[], float]) -> float | None:
    try:
        return fn()
    except UndefinedMetricError:
        return None


def evaluate_job(
    key: JobKey,
    cfg: TrainConfig,
    result: TrainResult,
    splits: Sequence[RunSplit],
    test_run: Run,
) -> dict[str, Any]:
    """Thresholds, BA, T_diff and Spearman ρ for a trained model."""
    state, center = result.best_state, result.center

    def cis(X: np.ndarray) -> np.ndarray:
        return ci(key.method, state, X, center)

    train_batch = split_batch(splits, "train")
    normal = train_batch.labels == Label.NORMAL
    counts = (
        int(np.count_nonzero(normal)),
        int(np.count_nonzero(train_batch.labels == Label.ANOMALOUS)),
    )
    normal_train_ci = cis(train_batch.X[normal])

    test_ci = cis(test_run.frames)
    labels = test_run.labels
    labeled = labels != Label.UNLABELED
    anomalous = (labels == Label.ANOMALOUS)[labeled]
    thresholds = ThresholdSet.for_model(
        key.method,
        normal_train_ci,
        test_ci[labeled],
        anomalous,
        cfg.ball,
        counts,
    )
    ba: dict[str, float] = {}
    diffs: dict[str, float | None] = {}
    for name, T in thresholds.items():
        predictions = classify(test_ci[labeled], T)
        ba[name] = balanced_accuracy(confusion(predictions, anomalous))
        if name != "T_opt":
            diffs[name] = _undefined_to_none(
                lambda T=T: t_diff(thresholds.T_opt, T),
            )

    test_rho = spearman_rho(test_ci, test_run.timestamps)
    train_rhos: dict[str, float | None] = {}
    for split in splits:
        run = split.run
        rho = spearman_rho(cis(run.frames[: run.t_a]), run.timestamps[: run.t_a])
        train_rhos[run.run_id] = rho.rho if rho.defined else None
    defined = [v for v in train_rhos.values() if v is not None]

    ratios = None
    if cfg.families:
        z = state.encode(train_batch.X)
        ratios = satisfaction_ratio(z, train_batch, cfg.ball, cfg.families).to_dict()

    return {
        "counts": counts,
        "thresholds": thresholds.to_dict(),
        "ba": ba,
        "ba_trivial": balanced_accuracy(trivial_baseline(anomalous)),
        "t_diff": diffs,
        "spearman_test": test_rho.rho if test_rho.defined else None,
        "spearman_train": float(np.mean(defined)) if defined else None,
        "spearman_train_runs": train_rhos,
        "train_ratios": ratios,
        "traces": {
            "test_ci": test_ci.tolist(),
            "test_labels": labels.tolist(),
            "normal_train_ci": normal_train_ci.tolist(),
        },
    }


def job_paths(out_dir: Path, key: JobKey) -> dict[str, Path]:
    return {
        "job": out_dir / JOBS_DIR / f"{key.slug}.json",
        "checkpoint": out_dir / CHECKPOINTS_DIR / f"{key.slug}.ckpt",
        "history": out_dir / HISTORIES_DIR / f"{key.slug}.jsonl",
    }


def run_job(
    spec: ExperimentSpec,
    runs: Sequence[Run],
    key: JobKey,
    out_dir: Path,
    resume: bool = True,
) -> JobResult:
    """Train and evaluate one job; a finished job file is reused when resuming.

    The job file is written last, so its presence marks a complete job. A
    finished job trained under different settings is retrained.
    """
    paths = job_paths(out_dir, key)
    config_hash = spec.fingerprint()
    if paths["job"].exists():
        if not resume:
            raise OutputExistsError(paths["job"])
        done = JobResult.from_dict(read_json(paths["job"]))
        if done.config_hash == config_hash:
            logger.info("%s: already done, skipping", key.slug)
            return done
        logger.warning(
            "%s: trained under settings %s, current are %s; retraining",
            key.slug,
            done.config_hash,
            config_hash,
        )

    cfg = job_config(spec, key)
    fold = build_folds(runs, key.n_anomalous, seed=FOLD_SEED)[key.fold]
    by_id = {run.run_id: run for run in runs}
    splits = split_fold(fold, by_id, seed=FOLD_SEED)
    logger.info("%s: training on %d runs", key.slug, len(splits))
    result = train(splits, cfg)

    checkpoints = result.history.checkpoints
    epoch = checkpoints[-1].epoch if checkpoints else 0
    save_checkpoint(
        paths["checkpoint"],
        Checkpoint(
            state=result.best_state,
            model_kind=key.method,
            center=result.center,
            epoch=epoch,
        ),
    )
    write_history(paths["history"], result.history)

    job = JobResult(
        key=key,
        test_run=fold.test_run,
        anomalous_source_runs=list(fold.anomalous_source_runs),
        checkpoint=str(paths["checkpoint"].relative_to(out_dir)),
        checkpoint_epoch=epoch,
        config_hash=config_hash,
        **evaluate_job(key, cfg, result, splits, by_id[fold.test_run]),
    )
    write_json(paths["job"], job.to_dict())
    return job


def _run_job_entry(
    spec: ExperimentSpec,
    runs: Sequence[Run],
    key: JobKey,
    out_dir: Path,
) -> JobResult:
    return run_job(spec, runs, key, out_dir, resume=True)


def run_sweep(
    spec: ExperimentSpec,
    runs: Sequence[Run],
    keys: Sequence[JobKey],
    out_dir: Path,
    workers: int = 1,
    on_done: Callable[[JobResult], None] | None = None,
) -> list[JobResult]:
    """Run all jobs, in parallel when workers > 1; results follow `keys` order."""
    write_json(out_dir / "config.json", spec.to_dict())
    results: dict[JobKey, JobResult] = {}
    if workers == 1:
        for key in keys:
            results[key] = _run_job_entry(spec, runs, key, out_dir)
            if on_done is not None:
                on_done(results[key])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_job_entry, spec, runs, key, out_dir): key
                for key in keys
            }
            for future in as_completed(futures):
                job = future.result()
                results[futures[future]] = job
                if on_done is not None:
                    on_done(job)
    return [results[key] for key in keys]


# -- Reports --


def _provenance(job: JobResult, value: float | None) -> dict[str, Any]:
    return {
        "fold": job.key.fold,
        "seed": job.key.seed,
        "test_run": job.test_run,
        "checkpoint": job.checkpoint,
        "checkpoint_epoch": job.checkpoint_epoch,
        "value": value,
    }


def _summary(entries: list[dict[str, Any]]) -> dict[str, Any]:
    values = [e["value"] for e in entries if e["value"] is not None]
    mean, std = aggregate(values) if values else (None, None)
    return {"mean": mean, "std": std, "n": len(values), "values": entries}


def _per_seed_summary(entries: list[dict[str, Any]]) -> dict[str, Any]:
    """Mean over folds for each seed, then aggregated over seeds."""
    by_seed: dict[int, list[float]] = defaultdict(list)
    for e in entries:
        if e["value"] is not None:
            by_seed[e["seed"]].append(e["value"])
    seed_means = [float(np.mean(v)) for _, v in sorted(by_seed.items())]
    mean, std = aggregate(seed_means) if seed_means else (None, None)
    return {"mean": mean, "std": std, "n": len(seed_means)}


def assemble_report(jobs: Sequence[JobResult]) -> dict[str, Any]:
    """Per-cell means and stds, each value kept with its provenance."""
    cells: dict[tuple[str, str, int], list[JobResult]] = defaultdict(list)
    for job in jobs:
        cells[job.key.cell].append(job)

    out: list[dict[str, Any]] = []
    for (method, recon_set, n), members in sorted(cells.items()):
        members = sorted(members, key=lambda j: j.key)
        threshold_names = [k for k in members[0].ba]
        rho: dict[str, Any] = {}
        for metric in ("spearman_train", "spearman_test"):
            entries = [_provenance(j, getattr(j, metric)) for j in members]
            rho[metric] = {
                "pooled": _summary(entries),
                "per_seed": _per_seed_summary(entries),
            }
        out.append(
            {
                "method": method,
                "recon_set": recon_set,
                "n_anomalous": n,
                "ba": {
                    name: _summary([_provenance(j, j.ba[name]) for j in members])
                    for name in threshold_names
                },
                "ba_trivial": _summary(
                    [_provenance(j, j.ba_trivial) for j in members],
                ),
                "t_diff": {
                    name: _summary([_provenance(j, j.t_diff[name]) for j in members])
                    for name in members[0].t_diff
                },
                **rho,
            },
        )
    slugs = [job.key.slug for job in sorted(jobs, key=lambda j: j.key)]
    return {"cells": out, "jobs": slugs}


def report_tables(report: dict[str, Any]) -> dict[str, pd.DataFrame]:
    """Table analogs of the report: BA, Spearman ρ (train/test) and T_diff."""
    ba_rows: list[dict[str, Any]] = []
    tdiff_rows: list[dict[str, Any]] = []
    rho_rows: dict[str, list[dict[str, Any]]] = {
        "spearman_train": [],
        "spearman_test": [],
    }
    for cell in report["cells"]:
        ident = {
            "method": cell["method"],
            "recon_set": cell["recon_set"],
            "n_anomalous": cell["n_anomalous"],
        }
        for name, summary in cell["ba"].items():
            ba_rows.append(
                {
                    **ident,
                    "threshold": name,
                    "mean": summary["mean"],
                    "std": summary["std"],
                },
            )
        for name, summary in cell["t_diff"].items():
            tdiff_rows.append(
                {
                    **ident,
                    "threshold": name,
                    "mean": summary["mean"],
                    "std": summary["std"],
                },
            )
        for metric, rows in rho_rows.items():
            pooled, per_seed = cell[metric]["pooled"], cell[metric]["per_seed"]
            rows.append(
                {
                    **ident,
                    "mean": pooled["mean"],
                    "std": pooled["std"],
                    "mean_by_seed": per_seed["mean"],
                    "std_by_seed": per_seed["std"],
                },
            )
    return {
        "ba": pd.DataFrame(ba_rows),
        "tdiff": pd.DataFrame(tdiff_rows),
        "spearman_train": pd.DataFrame(rho_rows["spearman_train"]),
        "spearman_test": pd.DataFrame(rho_rows["spearman_test"]),
    }


def write_report(report: dict[str, Any], out_dir: Path) -> list[Path]:
    written = [out_dir / REPORT_FILE]
    write_json(written[0], report)
    for name, table in report_tables(report).items():
        path = out_dir / f"{name}.csv"
        csv = table.to_csv(index=False, lineterminator="\n", float_format="%.6f")
        write_bytes_atomic(path, csv.encode())
        written.append(path)
    return written


def load_jobs(out_dir: Path, slugs: Iterable[str] | None = None) -> list[JobResult]:
    jobs_dir = out_dir / JOBS_DIR
    if slugs is None:
        paths = sorted(jobs_dir.glob("*.json"))
    else:
        paths = [jobs_dir / f"{slug}.json" for slug in slugs]
    return [JobResult.from_dict(read_json(path)) for path in paths]


def check_ablation(spec: ExperimentSpec) -> None:
    """Reconstruction-set ablations are defined for MCGAE only."""
    others = [m for m in spec.experiment.methods if m != "MCGAE"]
    if others:
        raise ConfigError(
            "experiment.methods",
            f"ablation runs MCGAE only, got {', '.join(others)}",
        )


def check_sweep(spec: ExperimentSpec) -> None:
    if len(spec.experiment.recon_sets) > 1:
        raise ConfigError(
            "experiment.recon_sets",
            "several reconstruction sets are an ablation; use `mcgae ablate`",
        )
