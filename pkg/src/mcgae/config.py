from __future__ import annotations

import hashlib
import json
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from mcgae.constraints import BallConfig
from mcgae.errors import ConfigError
from mcgae.models import MODEL_KINDS, RECON_SETS, BatchConfig, SyntheticConfig
from mcgae.training import NetworkConfig, TrainConfig

DEFAULT_OUTPUT_DIR = Path("results")

DEFAULT_CONFIG = """\
[dataset]
# Directory written by `mcgae generate`; leave unset to generate in memory.
# path = "data/desk"
# Frames are non-overlapping windows of `window` consecutive samples.
window = 1
# stride = 1

# Synthetic generator, used by `mcgae generate` and when no path is set.
n_runs = 6
frames_per_run = [800, 1200]
feature_dim = 16
# linear | exponential | piecewise
degradation_shape = "linear"
noise_std = 0.05
# Fractions of each run where the normal segment ends and anomalies start.
cutoff_fractions = [0.5, 0.8]
seed = 7

[network]
encoder_hidden = [32, 16]
latent_dim = 4
decoder_hidden = [16, 32]
# relu | tanh
activation = "relu"

[train]
r1 = 1.0
r2 = 2.0
# Rescale factor R for constraint directions; 0 disables guidance.
rescale = 1.5
zeta = 0.01
# Weight of the anomaly term (AE_DSVDD only).
lam = 1.0
lr = 0.001
lr_min = 1e-6
plateau_patience = 30
epochs = 150
# Scale directions per sample instead of by the batch gradient norm.
per_sample_scale = false

[batches]
batches_per_epoch = 20
runs_per_batch = 5
labeled_points_per_run = 25
unlabeled_points_per_run = 10
min_points_per_run_for_mono = 10

[experiment]
methods = ["AE_DSVDD", "CGAE", "MCGAE"]
anomalous_run_counts = [1, 2, 3]
seeds = [0, 1, 2]
# n | nu | na | nua; more than one is only valid for `mcgae ablate`.
recon_sets = ["n"]
# folds = [0, 1]
output_dir = "results"
workers = 1
"""

PRESETS: dict[str, str] = {
    "desk": "",
    "sm-like": """\
[dataset]
feature_dim = 64
window = 8
frames_per_run = [4000, 6000]

[network]
encoder_hidden = [128, 64]
latent_dim = 8
decoder_hidden = [64, 128]

[train]
epochs = 300

[batches]
batches_per_epoch = 80
runs_per_batch = 5

[experiment]
anomalous_run_counts = [1, 2, 3, 4, 5]
""",
    "abm-like": """\
[dataset]
n_runs = 5
feature_dim = 64
window = 8
frames_per_run = [4000, 6000]

[network]
encoder_hidden = [128, 96]
latent_dim = 64
decoder_hidden = [96, 128]

[train]
epochs = 500

[batches]
batches_per_epoch = 100
runs_per_batch = 4

[experiment]
anomalous_run_counts = [1, 2, 3, 4]
""",
}


@dataclass(frozen=True)
class DatasetSettings:
    path: Path | None = None
    window: int = 1
    stride: int | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass(frozen=True)
class ExperimentSettings:
    methods: tuple[str, ...] = MODEL_KINDS
    anomalous_run_counts: tuple[int, ...] = (1, 2, 3)
    seeds: tuple[int, ...] = (0, 1, 2)
    recon_sets: tuple[str, ...] = ("n",)
    folds: tuple[int, ...] | None = None
    output_dir: Path = DEFAULT_OUTPUT_DIR
    workers: int = 1


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetSettings
    train: TrainConfig
    experiment: ExperimentSettings
    preset: str = "desk"

    @classmethod
    def load(cls, path: Path | None = None, preset: str = "desk") -> ExperimentSpec:
        """Default spec, overlaid with a preset, overlaid with the user file."""
        if preset not in PRESETS:
            raise ConfigError("preset", f"expected one of {sorted(PRESETS)}")
        data = merge(tomllib.loads(DEFAULT_CONFIG), tomllib.loads(PRESETS[preset]))
        if path is not None:
            if not path.exists():
                raise ConfigError("config", f"file not found: {path}")
            try:
                with open(path, "rb") as f:
                    user = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError("config", f"{path}: {exc}") from exc
            data = merge(data, user)
        spec = parse_spec(data, base_dir=path.parent if path else None)
        return cls(
            dataset=spec.dataset,
            train=spec.train,
            experiment=spec.experiment,
            preset=preset,
        )

    def to_dict(self) -> dict[str, Any]:
        """Resolved spec in the TOML section layout."""
        t = self.train
        synth = self.dataset.synthetic
        dataset: dict[str, Any] = {
            "window": self.dataset.window,
            "n_runs": synth.n_runs,
            "frames_per_run": list(synth.frames_per_run),
            "feature_dim": synth.feature_dim,
            "degradation_shape": synth.degradation_shape,
            "noise_std": synth.noise_std,
            "cutoff_fractions": list(synth.cutoff_fractions),
            "seed": synth.seed,
        }
        if self.dataset.path is not None:
            dataset["path"] = str(self.dataset.path)
        if self.dataset.stride is not None:
            dataset["stride"] = self.dataset.stride
        experiment: dict[str, Any] = {
            "methods": list(self.experiment.methods),
            "anomalous_run_counts": list(self.experiment.anomalous_run_counts),
            "seeds": list(self.experiment.seeds),
            "recon_sets": list(self.experiment.recon_sets),
            "output_dir": str(self.experiment.output_dir),
            "workers": self.experiment.workers,
        }
        if self.experiment.folds is not None:
            experiment["folds"] = list(self.experiment.folds)
        return {
            "preset": self.preset,
            "dataset": dataset,
            "network": {
                "encoder_hidden": list(t.network.encoder_hidden),
                "latent_dim": t.network.latent_dim,
                "decoder_hidden": list(t.network.decoder_hidden),
                "activation": t.network.activation,
            },
            "train": {
                "r1": t.ball.r1,
                "r2": t.ball.r2,
                "rescale": t.rescale,
                "zeta": t.zeta,
                "lam": t.lam,
                "lr": t.lr,
                "lr_min": t.lr_min,
                "plateau_patience": t.plateau_patience,
                "epochs": t.epochs,
                "per_sample_scale": t.per_sample_scale,
            },
            "batches": {
                "batches_per_epoch": t.batches.batches_per_epoch,
                "runs_per_batch": t.batches.runs_per_batch,
                "labeled_points_per_run": t.batches.labeled_points_per_run,
                "unlabeled_points_per_run": t.batches.unlabeled_points_per_run,
                "min_points_per_run_for_mono": t.batches.min_points_per_run_for_mono,
            },
            "experiment": experiment,
        }

    def fingerprint(self) -> str:
        """Digest of every setting that changes what a job trains on or how.

        The experiment section is left out: a job key already names its
        method, recon set, anomalous-run count, fold and seed.
        """
        data = self.to_dict()
        relevant = {k: data[k] for k in ("dataset", "network", "train", "batches")}
        text = json.dumps(relevant, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Section-wise merge; keys in `override` win."""
    out = {
        key: dict(value) if isinstance(value, dict) else value
        for key, value in base.items()
    }
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def _check_keys(section: str, data: dict[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown key")


def _ints(section: str, key: str, value: Any) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
        raise ConfigError(f"{section}.{key}", "expected a list of integers")
    return tuple(value)


def _strs(section: str, key: str, value: Any) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{section}.{key}", "expected a list of strings")
    return tuple(value)


def _parse_dataset(data: dict[str, Any], base_dir: Path | None) -> DatasetSettings:
    _check_keys(
        "dataset",
        data,
        {
            "path",
            "window",
            "stride",
            "n_runs",
            "frames_per_run",
            "feature_dim",
            "degradation_shape",
            "noise_std",
            "cutoff_fractions",
            "seed",
        },
    )
    lo, hi = _ints("dataset", "frames_per_run", data["frames_per_run"])
    f_h, f_f = data["cutoff_fractions"]
    synthetic = SyntheticConfig(
        n_runs=data["n_runs"],
        frames_per_run=(lo, hi),
        feature_dim=data["feature_dim"],
        degradation_shape=data["degradation_shape"],
        noise_std=float(data["noise_std"]),
        cutoff_fractions=(float(f_h), float(f_f)),
        seed=data["seed"],
    )
    synthetic.validate()

    path = data.get("path")
    resolved = None
    if path is not None:
        resolved = Path(path).expanduser()
        if base_dir is not None and not resolved.is_absolute():
            resolved = base_dir / resolved
    window = data["window"]
    stride = data.get("stride")
    if not isinstance(window, int) or window < 1:
        raise ConfigError("dataset.window", "must be a positive integer")
    if stride is not None and (not isinstance(stride, int) or stride < 1):
        raise ConfigError("dataset.stride", "must be a positive integer")
    return DatasetSettings(
        path=resolved,
        window=window,
        stride=stride,
        synthetic=synthetic,
    )


def _parse_train(data: dict[str, Any]) -> TrainConfig:
    net = data["network"]
    _check_keys(
        "network",
        net,
        {"encoder_hidden", "latent_dim", "decoder_hidden", "activation"},
    )
    train = data["train"]
    _check_keys(
        "train",
        train,
        {
            "r1",
            "r2",
            "rescale",
            "zeta",
            "lam",
            "lr",
            "lr_min",
            "plateau_patience",
            "epochs",
            "per_sample_scale",
        },
    )
    batches = data["batches"]
    _check_keys(
        "batches",
        batches,
        {
            "batches_per_epoch",
            "runs_per_batch",
            "labeled_points_per_run",
            "unlabeled_points_per_run",
            "min_points_per_run_for_mono",
        },
    )
    cfg = TrainConfig(
        ball=BallConfig(r1=float(train["r1"]), r2=float(train["r2"])),
        lam=float(train["lam"]),
        rescale=float(train["rescale"]),
        zeta=float(train["zeta"]),
        lr=float(train["lr"]),
        lr_min=float(train["lr_min"]),
        plateau_patience=train["plateau_patience"],
        epochs=train["epochs"],
        per_sample_scale=bool(train["per_sample_scale"]),
        network=NetworkConfig(
            encoder_hidden=_ints("network", "encoder_hidden", net["encoder_hidden"]),
            latent_dim=net["latent_dim"],
            decoder_hidden=_ints("network", "decoder_hidden", net["decoder_hidden"]),
            activation=net["activation"],
        ),
        batches=BatchConfig(**batches),
    )
    cfg.validate()
    if cfg.network.latent_dim < 1:
        raise ConfigError("network.latent_dim", "must be positive")
    if cfg.network.activation not in ("relu", "tanh"):
        raise ConfigError("network.activation", "expected 'relu' or 'tanh'")
    return cfg


def _parse_experiment(
    data: dict[str, Any],
    base_dir: Path | None,
) -> ExperimentSettings:
    _check_keys(
        "experiment",
        data,
        {
            "methods",
            "anomalous_run_counts",
            "seeds",
            "recon_sets",
            "folds",
            "output_dir",
            "workers",
        },
    )
    methods = _strs("experiment", "methods", data["methods"])
    recon_sets = _strs("experiment", "recon_sets", data["recon_sets"])
    counts = _ints("experiment", "anomalous_run_counts", data["anomalous_run_counts"])
    seeds = _ints("experiment", "seeds", data["seeds"])
    folds = data.get("folds")

    if not methods:
        raise ConfigError("experiment.methods", "at least one method is required")
    for method in methods:
        if method not in MODEL_KINDS:
            raise ConfigError("experiment.methods", f"unknown method {method!r}")
    if not seeds:
        raise ConfigError("experiment.seeds", "at least one seed is required")
    if not counts or min(counts) < 1:
        raise ConfigError("experiment.anomalous_run_counts", "expected counts >= 1")
    if not recon_sets:
        raise ConfigError("experiment.recon_sets", "at least one set is required")
    for recon_set in recon_sets:
        if recon_set not in RECON_SETS:
            raise ConfigError("experiment.recon_sets", f"unknown set {recon_set!r}")
    workers = data["workers"]
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("experiment.workers", "must be a positive integer")

    output_dir = Path(data["output_dir"]).expanduser()
    if base_dir is not None and not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    return ExperimentSettings(
        methods=methods,
        anomalous_run_counts=counts,
        seeds=seeds,
        recon_sets=recon_sets,
        folds=None if folds is None else _ints("experiment", "folds", folds),
        output_dir=output_dir,
        workers=workers,
    )


def parse_spec(data: dict[str, Any], base_dir: Path | None = None) -> ExperimentSpec:
    """Build an ExperimentSpec from fully merged TOML data."""
    _check_keys(
        "config",
        data,
        {"dataset", "network", "train", "batches", "experiment", "preset"},
    )
    try:
        return ExperimentSpec(
            dataset=_parse_dataset(data["dataset"], base_dir),
            train=_parse_train(data),
            experiment=_parse_experiment(data["experiment"], base_dir),
        )
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "missing required key") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from exc


def render_config(preset: str = "desk") -> str:
    """The documented default spec, followed by the preset's overrides."""
    if preset not in PRESETS:
        raise ConfigError("preset", f"expected one of {sorted(PRESETS)}")
    if not PRESETS[preset]:
        return DEFAULT_CONFIG
    overrides = "".join(f"# {line}\n" for line in PRESETS[preset].splitlines())
    return f"{DEFAULT_CONFIG}\n# -- Preset '{preset}' overrides --\n{overrides}"
