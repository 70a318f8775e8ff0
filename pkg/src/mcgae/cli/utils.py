from __future__ import annotations

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import click

from mcgae.config import PRESETS, ExperimentSpec
from mcgae.errors import (
    CheckpointFormatError,
    ConfigError,
    DatasetFormatError,
    NumericalError,
    OutputExistsError,
    UndefinedMetricError,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigProblem(click.ClickException):
    """Bad configuration or input files."""

    exit_code = EXIT_CONFIG


class NumericalFailure(click.ClickException):
    """Training diverged."""

    exit_code = EXIT_NUMERICAL


@contextmanager
def _handle_errors() -> Iterator[None]:
    """Map library exceptions onto CLI exit codes."""
    try:
        yield
    except NumericalError as e:
        raise NumericalFailure(str(e)) from e
    except (
        ConfigError,
        DatasetFormatError,
        CheckpointFormatError,
        OutputExistsError,
        UndefinedMetricError,
    ) as e:
        raise ConfigProblem(str(e)) from e


def _configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _load_spec(
    config_path: Path | None,
    preset: str,
    seed: int | None = None,
    out: Path | None = None,
    workers: int | None = None,
) -> ExperimentSpec:
    """Load the experiment config and apply command-line overrides."""
    spec = ExperimentSpec.load(config_path, preset)
    experiment = spec.experiment
    if seed is not None:
        experiment = replace(experiment, seeds=(seed,))
    if out is not None:
        experiment = replace(experiment, output_dir=out)
    if workers is not None:
        if workers < 1:
            raise ConfigError("workers", "must be a positive integer")
        experiment = replace(experiment, workers=workers)
    return replace(spec, experiment=experiment)


def spec_options(fn: click.decorators.FC) -> click.decorators.FC:
    """--config and --preset, shared by every command that reads a spec."""
    fn = click.option(
        "--preset",
        type=click.Choice(sorted(PRESETS)),
        default="desk",
        show_default=True,
        help="Built-in profile the config file is layered on.",
    )(fn)
    return click.option(
        "-c",
        "--config",
        "config_path",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="Experiment spec (TOML).",
    )(fn)
