"""SVG figures: BA and T_diff curves, CI traces and CI histograms."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mcgae.models import Label  # noqa: E402
from mcgae.services.experiment import JobResult  # noqa: E402

HIST_CLIP = 2.0  # x-axis stops at this multiple of the largest normal training CI

_COLORS = {
    Label.NORMAL: "tab:green",
    Label.UNLABELED: "tab:gray",
    Label.ANOMALOUS: "tab:red",
}
_THRESHOLD_STYLES = {
    "T_train": ":",
    "T_sigmoid": "-.",
    "T_fixed": "--",
    "T_opt": "-",
}


def _save(fig: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "mcgae", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _plot_curves(
    report: dict[str, Any],
    metric: str,
    title: str,
    out_dir: Path,
) -> list[Path]:
    series: dict[str, dict[str, list[tuple[int, float, float]]]] = defaultdict(
        lambda: defaultdict(list),
    )
    for cell in report["cells"]:
        label = cell["method"]
        if cell["recon_set"] != "n":
            label = f"{label} ({cell['recon_set']})"
        for threshold, summary in cell[metric].items():
            if summary["mean"] is None:
                continue
            series[threshold][label].append(
                (cell["n_anomalous"], summary["mean"], summary["std"]),
            )

    written: list[Path] = []
    for threshold, lines in sorted(series.items()):
        fig, (ax_mean, ax_std) = plt.subplots(1, 2, figsize=(10, 4))
        for label, points in sorted(lines.items()):
            points.sort()
            n = [p[0] for p in points]
            ax_mean.plot(n, [p[1] for p in points], marker="o", label=label)
            ax_std.plot(n, [p[2] for p in points], marker="o", label=label)
        ax_mean.set_title(f"{title} mean ({threshold})")
        ax_std.set_title(f"{title} std ({threshold})")
        for ax in (ax_mean, ax_std):
            ax.set_xlabel("anomalous runs")
            ax.grid(True, alpha=0.3)
        ax_mean.legend()
        fig.tight_layout()
        written.append(_save(fig, out_dir / f"{metric}_{threshold}.svg"))
    return written


def plot_ba_curves(report: dict[str, Any], out_dir: Path) -> list[Path]:
    """Mean and std of BA against the number of anomalous runs, per threshold."""
    return _plot_curves(report, "ba", "BA", out_dir)


def plot_tdiff_curves(report: dict[str, Any], out_dir: Path) -> list[Path]:
    """Relative distance of each threshold to T_opt against anomalous runs."""
    return _plot_curves(report, "t_diff", "T_diff", out_dir)


def plot_ci_trace(job: JobResult, path: Path) -> Path:
    """CI of the test run over time, colored by label, with threshold lines."""
    ci = np.asarray(job.traces["test_ci"])
    labels = np.asarray(job.traces["test_labels"])
    t = np.arange(ci.size)

    fig, ax = plt.subplots(figsize=(10, 4))
    for label, color in _COLORS.items():
        mask = labels == label
        if np.any(mask):
            ax.scatter(t[mask], ci[mask], s=4, color=color, label=label.name.lower())
    for name, value in job.thresholds.items():
        if value is not None:
            ax.axhline(
                value,
                color="black",
                linestyle=_THRESHOLD_STYLES.get(name, "-"),
                linewidth=1,
                label=name,
            )
    ax.set_xlabel("frame")
    ax.set_ylabel("CI")
    ax.set_title(f"{job.key.slug}: test run {job.test_run}")
    ax.legend(loc="upper left", fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_ci_histogram(job: JobResult, path: Path, bins: int = 50) -> Path:
    """Test CI histogram per label, clipped at twice the max normal training CI."""
    ci = np.asarray(job.traces["test_ci"])
    labels = np.asarray(job.traces["test_labels"])
    normal_train = np.asarray(job.traces["normal_train_ci"])
    upper = HIST_CLIP * float(normal_train.max()) if normal_train.size else ci.max()
    if not upper > 0:
        upper = 1.0
    edges = np.linspace(0.0, upper, bins + 1)

    fig, ax = plt.subplots(figsize=(8, 4))
    for label, color in _COLORS.items():
        values = ci[labels == label]
        values = values[values <= upper]
        if values.size:
            ax.hist(
                values,
                bins=edges,
                color=color,
                alpha=0.5,
                label=label.name.lower(),
            )
    ax.set_xlim(0.0, upper)
    ax.set_xlabel("CI")
    ax.set_ylabel("frames")
    ax.set_title(f"{job.key.slug}: CI histogram")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_normal_ci_histograms(
    jobs: Sequence[JobResult],
    out_dir: Path,
    bins: int = 50,
) -> list[Path]:
    """Normal training CIs against normal test CIs, pooled over a cell's folds.

    The x-axis stops at twice the largest normal training CI of the cell.
    """
    cells: dict[tuple[str, str, int], list[JobResult]] = defaultdict(list)
    for job in jobs:
        cells[job.key.cell].append(job)

    written: list[Path] = []
    for (method, recon_set, n), members in sorted(cells.items()):
        train = np.concatenate(
            [np.asarray(job.traces["normal_train_ci"], dtype=float) for job in members],
        )
        test = np.concatenate(
            [
                np.asarray(job.traces["test_ci"], dtype=float)[
                    np.asarray(job.traces["test_labels"]) == Label.NORMAL
                ]
                for job in members
            ],
        )
        upper = HIST_CLIP * float(train.max()) if train.size else 0.0
        if not upper > 0:
            upper = 1.0
        edges = np.linspace(0.0, upper, bins + 1)

        fig, ax = plt.subplots(figsize=(8, 4))
        for values, color, label in (
            (train, "tab:blue", "normal (train)"),
            (test, "tab:orange", "normal (test)"),
        ):
            values = values[values <= upper]
            if values.size:
                ax.hist(
                    values,
                    bins=edges,
                    density=True,
                    color=color,
                    alpha=0.5,
                    label=label,
                )
        ax.set_xlim(0.0, upper)
        ax.set_xlabel("CI")
        ax.set_ylabel("density")
        ax.set_title(f"{method} ({recon_set}), {n} anomalous runs: normal CIs")
        ax.legend()
        fig.tight_layout()
        name = f"{method}-{recon_set}-a{n}.svg"
        written.append(_save(fig, out_dir / name))
    return written
