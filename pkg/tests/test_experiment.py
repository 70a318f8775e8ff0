from __future__ import annotations

import pickle
from dataclasses import replace
from pathlib import Path

import pytest

from mcgae.config import ExperimentSpec
from mcgae.errors import ConfigError, OutputExistsError
from mcgae.services import experiment
from mcgae.services.experiment import (
    JobKey,
    JobResult,
    assemble_report,
    check_ablation,
    check_sweep,
    job_paths,
    load_jobs,
    plan_jobs,
    prepare_dataset,
    report_tables,
    run_job,
    run_sweep,
    write_report,
)
from mcgae.storage import load_checkpoint, read_history, read_json, write_json


@pytest.fixture
def spec(spec_file: Path) -> ExperimentSpec:
    return ExperimentSpec.load(spec_file)


def _with(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    return replace(spec, experiment=replace(spec.experiment, **changes))


def _counting_train(monkeypatch) -> list[JobKey]:
    calls: list = []
    real = experiment.train

    def wrapped(splits, cfg, on_epoch=None):
        calls.append(cfg)
        return real(splits, cfg, on_epoch)

    monkeypatch.setattr(experiment, "train", wrapped)
    return calls


# -- Planning --


def test_plan_jobs_counts(spec) -> None:
    spec = _with(spec, anomalous_run_counts=(1, 2), folds=(0, 1))
    keys = plan_jobs(spec, 3)
    assert len(keys) == 4
    assert len({key.cell for key in keys}) == 2
    assert keys == sorted(keys)
    assert keys[0].slug == "MCGAE-n-a1-f0-s0"


def test_plan_jobs_defaults_to_every_fold(spec) -> None:
    keys = plan_jobs(_with(spec, folds=None), 3)
    assert [key.fold for key in keys] == [0, 1, 2]


def test_plan_jobs_rejects_out_of_range(spec) -> None:
    with pytest.raises(ConfigError, match="fold 3"):
        plan_jobs(_with(spec, folds=(3,)), 3)
    with pytest.raises(ConfigError, match="anomalous_run_counts"):
        plan_jobs(_with(spec, anomalous_run_counts=(3,)), 3)


def test_check_ablation_and_sweep(spec) -> None:
    check_ablation(spec)
    check_sweep(spec)
    with pytest.raises(ConfigError, match="MCGAE only"):
        check_ablation(_with(spec, methods=("CGAE", "MCGAE")))
    with pytest.raises(ConfigError, match="ablate"):
        check_sweep(_with(spec, recon_sets=("n", "nu")))
    check_ablation(_with(spec, recon_sets=("n", "nu", "na", "nua")))


def test_prepare_dataset_frames_runs(spec) -> None:
    runs = prepare_dataset(spec.dataset)
    assert len(runs) == 3
    windowed = prepare_dataset(replace(spec.dataset, window=2))
    assert windowed[0].feature_dim == 2 * runs[0].feature_dim
    assert windowed[0].n_frames == runs[0].n_frames // 2


# -- Jobs --


def test_run_job_writes_artifacts(spec, tmp_path) -> None:
    runs = prepare_dataset(spec.dataset)
    key = JobKey("MCGAE", "n", 1, 0, 0)
    out = tmp_path / "out"
    job = run_job(spec, runs, key, out)

    paths = job_paths(out, key)
    assert all(path.exists() for path in paths.values())
    checkpoint = load_checkpoint(paths["checkpoint"])
    assert checkpoint.model_kind == "MCGAE"
    assert checkpoint.center is None
    assert checkpoint.epoch == job.checkpoint_epoch
    assert len(read_history(paths["history"]).records) == spec.train.epochs

    assert job.test_run == runs[0].run_id
    assert len(job.anomalous_source_runs) == 1
    assert set(job.ba) == {"T_train", "T_sigmoid", "T_opt", "T_fixed"}
    assert all(0.0 <= v <= 1.0 for v in job.ba.values())
    assert job.ba["T_opt"] >= max(job.ba.values())
    assert job.ba_trivial == 0.5
    assert "T_opt" not in job.t_diff
    assert job.train_ratios is not None
    assert set(job.spearman_train_runs) == {r.run_id for r in runs[1:]}
    assert len(job.traces["test_ci"]) == runs[0].n_frames
    assert JobResult.from_dict(read_json(paths["job"])) == job


def test_run_job_aedsvdd_keeps_center(spec, tmp_path) -> None:
    runs = prepare_dataset(spec.dataset)
    key = JobKey("AE_DSVDD", "n", 1, 1, 0)
    job = run_job(spec, runs, key, tmp_path)
    checkpoint = load_checkpoint(job_paths(tmp_path, key)["checkpoint"])
    assert checkpoint.center is not None
    assert "T_fixed" not in job.ba
    assert job.train_ratios is None


def test_run_job_resume_and_refusal(spec, tmp_path, monkeypatch) -> None:
    runs = prepare_dataset(spec.dataset)
    key = JobKey("CGAE", "n", 1, 0, 0)
    calls = _counting_train(monkeypatch)
    first = run_job(spec, runs, key, tmp_path)
    again = run_job(spec, runs, key, tmp_path, resume=True)
    assert again == first
    assert len(calls) == 1
    with pytest.raises(OutputExistsError):
        run_job(spec, runs, key, tmp_path, resume=False)


def test_job_key_round_trip() -> None:
    key = JobKey("MCGAE", "nua", 2, 1, 3)
    assert key.slug == "MCGAE-nua-a2-f1-s3"
    assert key.cell == ("MCGAE", "nua", 2)
    assert pickle.loads(pickle.dumps(key)) == key


# -- Sweeps and reports --


def test_sweep_report_cells(spec, tmp_path) -> None:
    spec = _with(spec, anomalous_run_counts=(1, 2), folds=(0, 1))
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    done: list[JobResult] = []
    jobs = run_sweep(spec, runs, keys, tmp_path, on_done=done.append)
    assert [job.key for job in jobs] == keys
    assert len(done) == 4
    assert (tmp_path / "config.json").exists()

    report = assemble_report(jobs)
    assert len(report["cells"]) == 2
    assert report["jobs"] == [key.slug for key in keys]
    cell = report["cells"][0]
    assert (cell["method"], cell["recon_set"], cell["n_anomalous"]) == ("MCGAE", "n", 1)
    assert cell["ba"]["T_opt"]["n"] == 2
    assert cell["ba_trivial"]["mean"] == 0.5
    values = cell["ba"]["T_fixed"]["values"]
    assert [(v["fold"], v["seed"]) for v in values] == [(0, 0), (1, 0)]
    assert set(cell["spearman_train"]) == {"pooled", "per_seed"}
    assert cell["spearman_test"]["per_seed"]["n"] == 1

    tables = report_tables(report)
    assert len(tables["ba"]) == 2 * 4
    assert list(tables["spearman_test"].columns) == [
        "method",
        "recon_set",
        "n_anomalous",
        "mean",
        "std",
        "mean_by_seed",
        "std_by_seed",
    ]
    assert load_jobs(tmp_path) == jobs


def test_sweep_is_reproducible(spec, tmp_path) -> None:
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        jobs = run_sweep(spec, runs, keys, out)
        write_report(assemble_report(jobs), out)
        outputs.append(out)
    for name in ("report.json", "ba.csv", "tdiff.csv", "spearman_train.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_interrupted_sweep_resumes(spec, tmp_path, monkeypatch) -> None:
    spec = _with(spec, folds=(0, 1, 2))
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    first = run_sweep(spec, runs, keys, tmp_path)

    job_paths(tmp_path, keys[1])["job"].unlink()
    calls = _counting_train(monkeypatch)
    second = run_sweep(spec, runs, keys, tmp_path)
    assert len(calls) == 1
    assert second == first


def test_resume_retrains_changed_settings(spec, tmp_path, monkeypatch) -> None:
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    first = run_sweep(spec, runs, keys, tmp_path)
    assert first[0].config_hash == spec.fingerprint()

    longer = replace(spec, train=replace(spec.train, epochs=6))
    calls = _counting_train(monkeypatch)
    second = run_sweep(longer, runs, keys, tmp_path)
    assert len(calls) == len(keys)
    assert second[0].config_hash == longer.fingerprint()
    history = read_history(job_paths(tmp_path, keys[0])["history"])
    assert len(history.records) == 6
    assert read_json(tmp_path / "config.json")["train"]["epochs"] == 6

    # only the training settings matter; a wider sweep reuses finished jobs
    wider = _with(longer, seeds=(0, 1))
    third = run_sweep(wider, runs, plan_jobs(wider, len(runs)), tmp_path)
    assert len(calls) == 2
    assert third[0] == second[0]


def test_resume_retrains_legacy_jobs(spec, tmp_path, monkeypatch) -> None:
    runs = prepare_dataset(spec.dataset)
    key = JobKey("MCGAE", "n", 1, 0, 0)
    run_job(spec, runs, key, tmp_path)
    path = job_paths(tmp_path, key)["job"]
    data = read_json(path)
    del data["config_hash"]
    write_json(path, data)

    calls = _counting_train(monkeypatch)
    job = run_job(spec, runs, key, tmp_path, resume=True)
    assert len(calls) == 1
    assert job.config_hash == spec.fingerprint()


def test_parallel_sweep_matches_sequential(spec, tmp_path) -> None:
    spec = _with(spec, folds=(0, 1, 2))
    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    done: list[JobResult] = []
    outputs = {}
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        jobs = run_sweep(spec, runs, keys, out, workers=workers, on_done=done.append)
        assert [job.key for job in jobs] == keys
        write_report(assemble_report(jobs), out)
        outputs[workers] = out
    assert len(done) == 2 * len(keys)
    for name in ("report.json", "ba.csv", "tdiff.csv"):
        assert (outputs[1] / name).read_bytes() == (outputs[2] / name).read_bytes()
