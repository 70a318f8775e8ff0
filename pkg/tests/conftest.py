from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mcgae.constraints import BallConfig
from mcgae.data import build_folds, generate_dataset, split_fold, standardize_run
from mcgae.models import Batch, BatchConfig, Label, Run, RunSplit, SyntheticConfig
from mcgae.training import NetworkConfig, TrainConfig

TINY_DATASET = SyntheticConfig(
    n_runs=3,
    frames_per_run=(120, 160),
    feature_dim=6,
    noise_std=0.02,
    seed=3,
)

TINY_BATCHES = BatchConfig(
    batches_per_epoch=4,
    runs_per_batch=2,
    labeled_points_per_run=12,
    unlabeled_points_per_run=6,
    min_points_per_run_for_mono=5,
)

TINY_NETWORK = NetworkConfig(
    encoder_hidden=(8,),
    latent_dim=2,
    decoder_hidden=(8,),
    activation="tanh",
)

TINY_SPEC = """\
[dataset]
n_runs = 3
frames_per_run = [120, 160]
feature_dim = 6
noise_std = 0.02
seed = 3

[network]
encoder_hidden = [8]
latent_dim = 2
decoder_hidden = [8]
activation = "tanh"

[train]
epochs = 2
plateau_patience = 5

[batches]
batches_per_epoch = 3
runs_per_batch = 2
labeled_points_per_run = 12
unlabeled_points_per_run = 6
min_points_per_run_for_mono = 5

[experiment]
methods = ["MCGAE"]
anomalous_run_counts = [1]
seeds = [0]
folds = [0]
"""


@pytest.fixture
def tiny_runs() -> list[Run]:
    return [standardize_run(run) for run in generate_dataset(TINY_DATASET)]


@pytest.fixture
def tiny_splits(tiny_runs: list[Run]) -> list[RunSplit]:
    fold = build_folds(tiny_runs, 1)[0]
    return split_fold(fold, {run.run_id: run for run in tiny_runs})


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        model_kind="MCGAE",
        ball=BallConfig(r1=1.0, r2=2.0),
        epochs=3,
        plateau_patience=2,
        network=TINY_NETWORK,
        batches=TINY_BATCHES,
    )


@pytest.fixture
def spec_file(tmp_path: Path) -> Path:
    path = tmp_path / "spec.toml"
    path.write_text(TINY_SPEC + f'output_dir = "{tmp_path / "out"}"\n')
    return path


def make_batch(
    run_ids: list[str],
    frame_idx: list[int],
    labels: list[Label],
    dim: int = 2,
) -> Batch:
    n = len(run_ids)
    return Batch(
        run_ids=np.array(run_ids, dtype=str),
        frame_idx=np.array(frame_idx, dtype=np.int64),
        X=np.zeros((n, dim)),
        labels=np.array([int(label) for label in labels], dtype=np.int64),
    )
