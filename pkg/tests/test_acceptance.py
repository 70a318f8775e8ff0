"""Desk-scale end-to-end checks; run with `pytest -m slow`."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from mcgae.config import ExperimentSpec
from mcgae.services.experiment import (
    JobKey,
    assemble_report,
    plan_jobs,
    prepare_dataset,
    run_sweep,
    write_report,
)

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def desk() -> ExperimentSpec:
    return ExperimentSpec.load(preset="desk")


@pytest.fixture(scope="module")
def desk_jobs(desk, tmp_path_factory):
    runs = prepare_dataset(desk.dataset)
    keys = [
        JobKey(method, "n", 1, fold, seed)  # type: ignore[arg-type]
        for method in ("AE_DSVDD", "CGAE", "MCGAE")
        for fold in range(len(runs))
        for seed in SEEDS
    ]
    out = tmp_path_factory.mktemp("desk")
    jobs = run_sweep(desk, runs, keys, out, workers=4)
    return dict(zip(keys, jobs, strict=True))


def _jobs(desk_jobs, method: str):
    return [job for key, job in desk_jobs.items() if key.method == method]


def test_mcgae_reaches_constraint_satisfaction(desk_jobs) -> None:
    combined = [
        job.train_ratios["combined"]
        for job in _jobs(desk_jobs, "MCGAE")
        if job.key.fold == 0
    ]
    assert sum(value >= 0.95 for value in combined) >= 2


def test_mcgae_orders_training_data_in_time(desk_jobs) -> None:
    mcgae = np.mean([job.spearman_train for job in _jobs(desk_jobs, "MCGAE")])
    cgae = np.mean([job.spearman_train for job in _jobs(desk_jobs, "CGAE")])
    assert mcgae >= 0.80
    assert mcgae - cgae >= 0.15


def test_thresholds_discriminate(desk_jobs) -> None:
    for method in ("AE_DSVDD", "CGAE", "MCGAE"):
        jobs = _jobs(desk_jobs, method)
        assert np.mean([job.ba["T_opt"] for job in jobs]) >= 0.95
        if method != "AE_DSVDD":
            gap = np.mean([job.ba["T_opt"] - job.ba["T_fixed"] for job in jobs])
            assert gap <= 0.10


def test_desk_sweep_is_reproducible(desk, tmp_path) -> None:
    spec = replace(
        desk,
        experiment=replace(desk.experiment, seeds=(0,), folds=(0,)),
    )
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        write_report(assemble_report(run_sweep(spec, runs, keys, out)), out)
        outputs.append(out)
    for path in sorted(outputs[0].glob("*.csv")) + [outputs[0] / "report.json"]:
        assert path.read_bytes() == (outputs[1] / path.name).read_bytes()
