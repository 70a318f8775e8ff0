from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import click

from mcgae.cli.utils import _handle_errors, _load_spec, spec_options
from mcgae.data import generate_dataset, standardize_run
from mcgae.storage import write_dataset


@click.command()
@spec_options
@click.option("--seed", type=int, default=None, help="Override the generator seed.")
@click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Dataset directory (default: dataset.path, else data/<preset>).",
)
@click.option("--overwrite", is_flag=True, help="Replace an existing dataset.")
def generate(
    config_path: Path | None,
    preset: str,
    seed: int | None,
    out: Path | None,
    overwrite: bool,
) -> None:
    """Generate a synthetic run-to-failure dataset and write it to disk."""
    with _handle_errors():
        spec = _load_spec(config_path, preset)
        synthetic = spec.dataset.synthetic
        if seed is not None:
            synthetic = replace(synthetic, seed=seed)
        target = out or spec.dataset.path or Path("data") / preset

        runs = [standardize_run(run) for run in generate_dataset(synthetic)]
        write_dataset(runs, target, generator=synthetic, overwrite=overwrite)

    click.echo(f"Wrote {len(runs)} runs to {target}")
    for run in runs:
        click.echo(
            f"  {run.run_id}: {run.n_frames} frames, "
            f"normal < {run.p_h}, anomalous >= {run.p_f}",
        )
