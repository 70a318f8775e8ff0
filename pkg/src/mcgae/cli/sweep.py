from __future__ import annotations

from pathlib import Path

import click

from mcgae.cli.utils import _handle_errors, _load_spec, spec_options
from mcgae.config import ExperimentSpec
from mcgae.errors import OutputExistsError
from mcgae.services.experiment import (
    JOBS_DIR,
    JobResult,
    assemble_report,
    check_ablation,
    check_sweep,
    plan_jobs,
    prepare_dataset,
    report_tables,
    run_sweep,
    write_report,
)


def _run(spec: ExperimentSpec, resume: bool) -> None:
    out_dir = spec.experiment.output_dir
    jobs_dir = out_dir / JOBS_DIR
    if not resume and jobs_dir.exists() and any(jobs_dir.iterdir()):
        raise OutputExistsError(out_dir)

    runs = prepare_dataset(spec.dataset)
    keys = plan_jobs(spec, len(runs))
    click.echo(f"{len(keys)} jobs over {len(runs)} runs -> {out_dir}")

    done = 0

    def progress(job: JobResult) -> None:
        nonlocal done
        done += 1
        click.echo(f"[{done}/{len(keys)}] {job.key.slug}")

    jobs = run_sweep(
        spec,
        runs,
        keys,
        out_dir,
        workers=spec.experiment.workers,
        on_done=progress,
    )
    report = assemble_report(jobs)
    write_report(report, out_dir)
    ba = report_tables(report)["ba"]
    click.echo(ba.to_string(index=False, float_format=lambda v: f"{v:.3f}"))


_OUT = click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Output directory (default: experiment.output_dir).",
)
_SEED = click.option("--seed", type=int, default=None, help="Run a single seed.")
_WORKERS = click.option(
    "-j",
    "--workers",
    type=int,
    default=None,
    help="Parallel training jobs.",
)
_RESUME = click.option("--resume", is_flag=True, help="Continue an interrupted sweep.")


@click.command()
@spec_options
@_SEED
@_OUT
@_WORKERS
@_RESUME
def sweep(
    config_path: Path | None,
    preset: str,
    seed: int | None,
    out: Path | None,
    workers: int | None,
    resume: bool,
) -> None:
    """Leave-one-run-out sweep over methods, anomalous-run counts and seeds."""
    with _handle_errors():
        spec = _load_spec(config_path, preset, seed=seed, out=out, workers=workers)
        check_sweep(spec)
        _run(spec, resume)


@click.command()
@spec_options
@_SEED
@_OUT
@_WORKERS
@_RESUME
def ablate(
    config_path: Path | None,
    preset: str,
    seed: int | None,
    out: Path | None,
    workers: int | None,
    resume: bool,
) -> None:
    """Sweep MCGAE over the reconstruction sets in experiment.recon_sets."""
    with _handle_errors():
        spec = _load_spec(config_path, preset, seed=seed, out=out, workers=workers)
        check_ablation(spec)
        _run(spec, resume)
