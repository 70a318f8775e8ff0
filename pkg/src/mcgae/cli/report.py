from __future__ import annotations

from pathlib import Path

import click

from mcgae.cli.utils import _handle_errors
from mcgae.errors import DatasetFormatError
from mcgae.services.experiment import REPORT_FILE, load_jobs, write_report
from mcgae.storage import read_json


@click.command()
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--no-traces", is_flag=True, help="Skip per-job CI plots.")
def report(path: Path, no_traces: bool) -> None:
    """Write tables and SVG figures for a finished sweep.

    PATH is the sweep directory or its report.json.
    """
    from mcgae import plots

    out_dir = path.parent if path.is_file() else path
    report_path = out_dir / REPORT_FILE
    with _handle_errors():
        if not report_path.exists():
            raise DatasetFormatError(report_path, "report file not found")
        data = read_json(report_path)
        written = write_report(data, out_dir)
        figures = out_dir / "figures"
        jobs = load_jobs(out_dir, data["jobs"])
        written += plots.plot_ba_curves(data, figures)
        written += plots.plot_tdiff_curves(data, figures)
        written += plots.plot_normal_ci_histograms(jobs, figures / "normal_ci")
        if not no_traces:
            for job in jobs:
                name = f"{job.key.slug}.svg"
                written.append(plots.plot_ci_trace(job, figures / "traces" / name))
                written.append(plots.plot_ci_histogram(job, figures / "hist" / name))
    click.echo(f"Wrote {len(written)} files under {out_dir}")
