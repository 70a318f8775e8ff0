"""Flat-file persistence: datasets, checkpoints, histories and job results.

Everything written here is deterministic for identical inputs, so reruns
produce byte-identical files.
"""

from __future__ import annotations

import io
import json
import shutil
import struct
import tempfile
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from mcgae.errors import CheckpointFormatError, DatasetFormatError, OutputExistsError
from mcgae.models import (
    MODEL_KINDS,
    ModelKind,
    Run,
    StandardizationStats,
    SyntheticConfig,
)
from mcgae.network import ArchitectureSpec, AutoencoderState
from mcgae.training import CenterState, EpochRecord, TrainHistory

FORMAT_VERSION = 1
MANIFEST = "manifest.json"

CHECKPOINT_MAGIC = b"MCGAE\x00"
_CHECKPOINT_PREFIX = struct.Struct("<6sHI")  # magic, version, header length


# -- Atomic writes --


@contextmanager
def staged_dir(target: Path, overwrite: bool = False) -> Iterator[Path]:
    """Yield a scratch directory that replaces `target` only on success."""
    if target.exists() and not overwrite:
        raise OutputExistsError(target, hint="--overwrite")
    target.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    scratch.rename(target)


def write_bytes_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: Path, data: Any) -> None:
    write_bytes_atomic(path, dump_json(data).encode())


def read_json(path: Path) -> Any:
    with open(path) as f:
        return json.load(f)


# -- Datasets --


def _fmt(values: Iterable[float]) -> str:
    return ",".join(f"{v:.17g}" for v in values)


def _run_file(run: Run) -> str:
    return f"{run.run_id}.csv"


def _write_run(path: Path, run: Run) -> None:
    header = [
        f"run_id={run.run_id}",
        f"features={run.feature_dim}",
        f"p_h={run.p_h}",
        f"p_f={run.p_f}",
    ]
    if run.stats is not None:
        header.append(f"mean={_fmt(run.stats.mean)}")
        header.append(f"scale={_fmt(run.stats.scale)}")
        zero = ",".join(str(i) for i in run.stats.zero_variance)
        header.append(f"zero_variance={zero}")
    table = np.column_stack([run.timestamps, run.labels, run.frames])
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.17g", delimiter=",", header="\n".join(header))
    path.write_text(buf.getvalue())


def _read_run(path: Path) -> Run:
    if not path.is_file():
        raise DatasetFormatError(path, "run file listed in the manifest is missing")
    meta: dict[str, str] = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key] = value
    try:
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        run_id = meta["run_id"]
        n_features = int(meta["features"])
        p_h, p_f = int(meta["p_h"]), int(meta["p_f"])
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(path, str(exc)) from exc
    if table.shape[1] != n_features + 2:
        raise DatasetFormatError(
            path,
            f"expected {n_features + 2} columns, got {table.shape[1]}",
        )

    stats = None
    if "mean" in meta:
        zero = meta.get("zero_variance", "")
        stats = StandardizationStats(
            mean=np.array([float(v) for v in meta["mean"].split(",")]),
            scale=np.array([float(v) for v in meta["scale"].split(",")]),
            zero_variance=tuple(int(i) for i in zero.split(",") if i),
        )
    run = Run(
        run_id=run_id,
        frames=np.ascontiguousarray(table[:, 2:]),
        timestamps=table[:, 0].copy(),
        p_h=p_h,
        p_f=p_f,
        stats=stats,
    )
    run.validate()
    if not np.array_equal(run.labels, table[:, 1].astype(np.int64)):
        raise DatasetFormatError(path, "label column disagrees with p_h/p_f")
    return run


def write_dataset(
    runs: list[Run],
    out_dir: Path,
    generator: SyntheticConfig | None = None,
    overwrite: bool = False,
) -> Path:
    """Write a manifest plus one CSV per run; nothing is left on failure."""
    for run in runs:
        run.validate()
    manifest = {
        "format": "mcgae-dataset",
        "version": FORMAT_VERSION,
        "generator": None if generator is None else asdict(generator),
        "feature_dim": runs[0].feature_dim if runs else 0,
        "runs": [
            {
                "run_id": run.run_id,
                "file": _run_file(run),
                "n_frames": run.n_frames,
                "p_h": run.p_h,
                "p_f": run.p_f,
            }
            for run in runs
        ],
    }
    with staged_dir(out_dir, overwrite=overwrite) as scratch:
        for run in runs:
            _write_run(scratch / _run_file(run), run)
        (scratch / MANIFEST).write_text(dump_json(manifest))
    return out_dir


def load_dataset(path: Path) -> list[Run]:
    manifest_path = path / MANIFEST
    if not manifest_path.exists():
        raise DatasetFormatError(path, f"no {MANIFEST} found")
    manifest = read_json(manifest_path)
    if manifest.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(
            manifest_path,
            f"unsupported format version {manifest.get('version')}",
        )
    runs = [_read_run(path / entry["file"]) for entry in manifest["runs"]]
    if len({run.feature_dim for run in runs}) > 1:
        raise DatasetFormatError(path, "runs have different feature dimensions")
    return runs


# -- Checkpoints --


@dataclass(frozen=True)
class Checkpoint:
    state: AutoencoderState
    model_kind: ModelKind
    center: CenterState | None = None
    epoch: int = 0


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> None:
    state = checkpoint.state
    header = {
        "arch": state.arch.to_dict(),
        "offsets": state.arch.offsets,
        "model_kind": checkpoint.model_kind,
        "epoch": checkpoint.epoch,
        "center": None if checkpoint.center is None else checkpoint.center.c.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    params = np.ascontiguousarray(state.params, dtype="<f8").tobytes()
    prefix = _CHECKPOINT_PREFIX.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(blob))
    write_bytes_atomic(path, prefix + blob + params)


def load_checkpoint(path: Path) -> Checkpoint:
    data = path.read_bytes()
    if len(data) < _CHECKPOINT_PREFIX.size:
        raise CheckpointFormatError(path, "file too short")
    magic, version, n_header = _CHECKPOINT_PREFIX.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(path, "bad magic")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(path, f"unsupported version {version}")
    start = _CHECKPOINT_PREFIX.size
    try:
        header = json.loads(data[start : start + n_header])
        arch = ArchitectureSpec.from_dict(header["arch"])
    except (ValueError, KeyError) as exc:
        raise CheckpointFormatError(path, f"bad header: {exc}") from exc
    kind = header.get("model_kind")
    if kind not in MODEL_KINDS:
        raise CheckpointFormatError(path, f"unknown model kind {kind!r}")
    raw = data[start + n_header :]
    if len(raw) != arch.n_params * 8:
        raise CheckpointFormatError(
            path,
            f"expected {arch.n_params} parameters, got {len(raw) // 8}",
        )
    center = header.get("center")
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return Checkpoint(
        state=AutoencoderState(arch=arch, params=params),
        model_kind=header["model_kind"],
        center=None if center is None else CenterState(c=np.array(center)),
        epoch=int(header.get("epoch", 0)),
    )


# -- Histories --


def write_history(path: Path, history: TrainHistory) -> None:
    lines = [json.dumps(r.to_event(), sort_keys=True) for r in history.records]
    write_bytes_atomic(path, "".join(f"{line}\n" for line in lines).encode())


def read_history(path: Path) -> TrainHistory:
    history = TrainHistory()
    with open(path) as f:
        for line in f:
            if line.strip():
                history.records.append(EpochRecord.from_event(json.loads(line)))
    return history
