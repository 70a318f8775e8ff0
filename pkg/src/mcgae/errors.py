"""Domain exceptions shared across the library and the CLI.

Each exception rebuilds itself from its constructor arguments when pickled,
so errors raised in sweep worker processes reach the parent intact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised when a configuration value is missing or out of range."""

    def __init__(self, key: str, message: str) -> None:
        self.key = key
        self.message = message
        super().__init__(f"Invalid '{key}': {message}")

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.key, self.message))


class NumericalError(ArithmeticError):
    """Raised when training produces a non-finite quantity."""

    def __init__(self, epoch: int, quantity: str, value: float) -> None:
        self.epoch = epoch
        self.quantity = quantity
        self.value = value
        super().__init__(
            f"Non-finite {quantity} ({value}) at epoch {epoch}; training aborted.",
        )

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.epoch, self.quantity, self.value))


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""

    def __init__(self, metric: str, reason: str) -> None:
        self.metric = metric
        self.reason = reason
        super().__init__(f"{metric} is undefined: {reason}")

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.metric, self.reason))


class DatasetFormatError(ValueError):
    """Raised when a persisted run or manifest cannot be parsed."""

    def __init__(self, path: Path, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.path, self.reason))


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file has a bad header or payload."""

    def __init__(self, path: Path, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"Checkpoint {path}: {reason}")

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.path, self.reason))


class OutputExistsError(FileExistsError):
    """Raised when a command would overwrite existing results."""

    def __init__(self, path: Path, hint: str = "--resume") -> None:
        self.path = path
        self.hint = hint
        super().__init__(f"Output '{path}' already exists (pass {hint}).")

    def __reduce__(self) -> tuple[Any, ...]:
        return (type(self), (self.path, self.hint))
