from __future__ import annotations

import click

from mcgae.cli.utils import _handle_errors
from mcgae.config import PRESETS, render_config


@click.command()
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default="desk",
    show_default=True,
)
def config(preset: str) -> None:
    """Print the documented default experiment spec."""
    with _handle_errors():
        click.echo(render_config(preset), nl=False)
