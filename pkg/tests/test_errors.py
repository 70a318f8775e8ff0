from __future__ import annotations

import pickle
from pathlib import Path

import pytest

from mcgae.errors import (
    CheckpointFormatError,
    ConfigError,
    DatasetFormatError,
    NumericalError,
    OutputExistsError,
    UndefinedMetricError,
)


@pytest.mark.parametrize(
    "error",
    [
        ConfigError("train.lr", "must be > 0"),
        NumericalError(4, "training loss", float("inf")),
        UndefinedMetricError("T_diff", "T_opt must be > 0"),
        DatasetFormatError(Path("data/run-00.csv"), "bad header"),
        CheckpointFormatError(Path("model.ckpt"), "bad magic"),
        OutputExistsError(Path("results"), hint="--overwrite"),
    ],
)
def test_errors_survive_pickling(error: Exception) -> None:
    copy = pickle.loads(pickle.dumps(error))
    assert type(copy) is type(error)
    assert str(copy) == str(error)
    assert vars(copy) == vars(error)


def test_messages() -> None:
    assert str(ConfigError("train.lr", "must be > 0")) == "Invalid 'train.lr': must be > 0"
    assert "epoch 4" in str(NumericalError(4, "gradient", float("nan")))
    assert str(OutputExistsError(Path("out"))).endswith("(pass --resume).")
