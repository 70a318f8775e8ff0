from __future__ import annotations

import click

from mcgae.cli.admin import config
from mcgae.cli.data import generate
from mcgae.cli.report import report
from mcgae.cli.sweep import ablate, sweep
from mcgae.cli.train import train_cmd
from mcgae.cli.utils import _configure_logging


@click.group()
@click.option(
    "-v",
    "--verbose",
    count=True,
    help="Log progress (-v) or debug details (-vv).",
)
def cli(verbose: int) -> None:
    """mcgae: constraint-guided autoencoders for run-to-failure anomaly detection."""
    _configure_logging(verbose)


# Register experiment commands
cli.add_command(generate)
cli.add_command(train_cmd)
cli.add_command(sweep)
cli.add_command(ablate)
cli.add_command(report)

# Register admin commands
cli.add_command(config)
