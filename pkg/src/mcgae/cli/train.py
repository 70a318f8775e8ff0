from __future__ import annotations

from pathlib import Path

import click

from mcgae.cli.utils import _handle_errors, _load_spec, spec_options
from mcgae.models import MODEL_KINDS, RECON_SETS
from mcgae.services.experiment import JobKey, prepare_dataset, run_job
from mcgae.storage import write_json


@click.command("train")
@spec_options
@click.option(
    "--fold",
    type=int,
    default=0,
    show_default=True,
    help="Index of the held-out test run.",
)
@click.option(
    "--method",
    type=click.Choice(MODEL_KINDS),
    default="MCGAE",
    show_default=True,
)
@click.option("--n-anomalous", type=int, default=1, show_default=True)
@click.option(
    "--recon-set",
    type=click.Choice(RECON_SETS),
    default="n",
    show_default=True,
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Training seed (default: first experiment seed).",
)
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Output directory (default: experiment.output_dir).",
)
@click.option("--resume", is_flag=True, help="Reuse a finished job.")
def train_cmd(
    config_path: Path | None,
    preset: str,
    fold: int,
    method: str,
    n_anomalous: int,
    recon_set: str,
    seed: int | None,
    out: Path | None,
    resume: bool,
) -> None:
    """Train one model on one fold and save its best checkpoint."""
    with _handle_errors():
        spec = _load_spec(config_path, preset, seed=seed, out=out)
        runs = prepare_dataset(spec.dataset)
        if not 0 <= fold < len(runs):
            raise click.BadParameter(
                f"must be in [0, {len(runs)})",
                param_hint="--fold",
            )
        key = JobKey(
            method=method,  # type: ignore[arg-type]
            recon_set=recon_set,  # type: ignore[arg-type]
            n_anomalous=n_anomalous,
            fold=fold,
            seed=spec.experiment.seeds[0],
        )
        out_dir = spec.experiment.output_dir
        job = run_job(spec, runs, key, out_dir, resume=resume)
        write_json(out_dir / "config.json", spec.to_dict())

    click.echo(
        f"{key.slug}: checkpoint {job.checkpoint} (epoch {job.checkpoint_epoch})",
    )
    for name, value in job.ba.items():
        click.echo(f"  BA[{name}] = {value:.3f}")
    if job.spearman_test is not None:
        click.echo(f"  rho(test) = {job.spearman_test:.3f}")
