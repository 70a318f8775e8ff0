"""Training for AE-DSVDD, CGAE and MCGAE.

CGAE and MCGAE follow constraint-guided gradient descent: constraint
directions are injected at the encoding layer, scaled by R·max{‖∇_e L‖, ζ},
chained through the encoder and the resulting effective gradient is handed
to Adam.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from mcgae.constraints import (
    BallConfig,
    DirectionBundle,
    Family,
    SatisfactionRatios,
    compute_directions,
    satisfaction_ratio,
)
from mcgae.data import sample_epoch, split_batch
from mcgae.errors import ConfigError, NumericalError
from mcgae.models import (
    MODEL_KINDS,
    RECON_SETS,
    Batch,
    BatchConfig,
    BoolArray,
    FloatArray,
    IntArray,
    Label,
    ModelKind,
    ReconSet,
    RunSplit,
)
from mcgae.network import (
    Activation,
    ArchitectureSpec,
    AutoencoderState,
    ForwardTrace,
    backward,
    backward_decoder,
    backward_encoder,
    forward,
    init,
    recon_loss,
)

logger = logging.getLogger(__name__)

CENTER_MIN = 0.1  # |c_j| floor, DSVDD's center must stay away from 0
ANOMALY_CLAMP = 1e-8  # floor on ‖z − c‖² in the inverse anomaly term
SATISFIED_ENOUGH = 0.95


@dataclass(frozen=True)
class NetworkConfig:
    encoder_hidden: tuple[int, ...] = (32, 16)
    latent_dim: int = 4
    decoder_hidden: tuple[int, ...] = (16, 32)
    activation: Activation = "relu"

    def architecture(self, input_dim: int) -> ArchitectureSpec:
        arch = ArchitectureSpec(
            input_dim=input_dim,
            encoder_widths=(*self.encoder_hidden, self.latent_dim),
            decoder_widths=(*self.decoder_hidden, input_dim),
            activation=self.activation,
        )
        arch.validate()
        return arch


@dataclass(frozen=True)
class TrainConfig:
    model_kind: ModelKind = "MCGAE"
    ball: BallConfig = field(default_factory=BallConfig)
    lam: float = 1.0  # anomaly weight, AE-DSVDD only
    rescale: float = 1.5  # R; 0 disables constraint guidance
    zeta: float = 1e-2
    lr: float = 1e-3
    lr_min: float = 1e-6
    plateau_patience: int = 30
    epochs: int = 150
    recon_set: ReconSet = "n"
    seed: int = 0
    per_sample_scale: bool = False
    network: NetworkConfig = field(default_factory=NetworkConfig)
    batches: BatchConfig = field(default_factory=BatchConfig)

    @property
    def families(self) -> tuple[Family, ...]:
        if self.model_kind == "MCGAE":
            return ("normal", "anomalous", "monotonicity")
        if self.model_kind == "CGAE":
            return ("normal", "anomalous")
        return ()

    def validate(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError("train.model_kind", f"expected one of {MODEL_KINDS}")
        if self.recon_set not in RECON_SETS:
            raise ConfigError("train.recon_set", f"expected one of {RECON_SETS}")
        self.ball.validate()
        if not (self.rescale > 1 or self.rescale == 0):
            raise ConfigError("train.rescale", "must be > 1 (or 0 to disable)")
        if self.zeta <= 0:
            raise ConfigError("train.zeta", "must be > 0")
        if self.lam <= 0:
            raise ConfigError("train.lam", "must be > 0")
        if not 0 < self.lr_min <= self.lr:
            raise ConfigError("train.lr", "expected 0 < lr_min <= lr")
        if self.plateau_patience < 1:
            raise ConfigError("train.plateau_patience", "must be >= 1")
        if self.epochs < 0:
            raise ConfigError("train.epochs", "must be >= 0")
        self.batches.validate()


@dataclass(frozen=True)
class CenterState:
    c: FloatArray


# -- Objectives --


def select_recon_set(labels: IntArray, recon_set: ReconSet) -> BoolArray:
    """Rows whose reconstruction error enters the loss."""
    keep = {Label.NORMAL}
    if "u" in recon_set:
        keep.add(Label.UNLABELED)
    if "a" in recon_set:
        keep.add(Label.ANOMALOUS)
    return np.isin(labels, [int(label) for label in keep])


def init_center(normal_encodings: FloatArray) -> CenterState:
    """Mean normal encoding, with near-zero coordinates pushed to ±0.1."""
    c = normal_encodings.mean(axis=0)
    small = np.abs(c) < CENTER_MIN
    c[small] = np.where(c[small] < 0, -CENTER_MIN, CENTER_MIN)
    return CenterState(c=c)


def aedsvdd_terms(
    trace: ForwardTrace,
    X: FloatArray,
    labels: IntArray,
    center: CenterState,
    lam: float,
    recon_mask: BoolArray | None = None,
) -> tuple[float, FloatArray]:
    """AE-DSVDD loss and its gradient w.r.t. the encodings (center terms only)."""
    mask = select_recon_set(labels, "n") if recon_mask is None else recon_mask
    loss, _ = recon_loss(trace, X, mask)
    diff = trace.z - center.c
    dist = np.sum(diff**2, axis=1)
    grad_z = np.zeros_like(trace.z)

    normal = labels == Label.NORMAL
    n_normal = int(np.count_nonzero(normal))
    if n_normal:
        loss += float(dist[normal].sum() / n_normal)
        grad_z[normal] = 2.0 * diff[normal] / n_normal

    anomalous = labels == Label.ANOMALOUS
    n_anomalous = int(np.count_nonzero(anomalous))
    if n_anomalous:
        clamped = np.maximum(dist[anomalous], ANOMALY_CLAMP)
        loss += lam * float(np.sum(1.0 / clamped)) / n_anomalous
        coeff = np.where(dist[anomalous] < ANOMALY_CLAMP, 0.0, -2.0 / clamped**2)
        grad_z[anomalous] = lam * coeff[:, None] * diff[anomalous] / n_anomalous
    return loss, grad_z


def aedsvdd_loss(
    state: AutoencoderState,
    center: CenterState,
    batch: Batch,
    lam: float,
    recon_set: ReconSet = "n",
) -> float:
    trace = forward(state, batch.X)
    mask = select_recon_set(batch.labels, recon_set)
    loss, _ = aedsvdd_terms(trace, batch.X, batch.labels, center, lam, mask)
    return loss


# -- Constraint-guided update --


def constraint_scale(
    grad_e: FloatArray,
    normal_rows: BoolArray,
    zeta: float,
    per_sample: bool = False,
) -> FloatArray:
    """max{‖∇_e L‖, ζ} for every row.

    The batch-aggregate form takes the norm over the normal reconstruction
    rows; the per-sample form uses each row's own gradient norm.
    """
    if per_sample:
        return np.maximum(np.linalg.norm(grad_e, axis=1), zeta)
    norm = float(np.linalg.norm(grad_e[normal_rows])) if np.any(normal_rows) else 0.0
    return np.full(grad_e.shape[0], max(norm, zeta))


@dataclass
class EffectiveGradient:
    param_grad: FloatArray
    grad_e: FloatArray
    scale: FloatArray
    injection: FloatArray


def effective_gradient(
    state: AutoencoderState,
    trace: ForwardTrace,
    X: FloatArray,
    labels: IntArray,
    bundle: DirectionBundle,
    cfg: TrainConfig,
) -> EffectiveGradient:
    """Loss gradient plus R·s·(summed directions) chained through the encoder."""
    recon_mask = select_recon_set(labels, cfg.recon_set)
    grad, grad_e = backward_decoder(state, trace, X, recon_mask)
    normal_rows = recon_mask & (labels == Label.NORMAL)
    scale = constraint_scale(grad_e, normal_rows, cfg.zeta, cfg.per_sample_scale)
    injection = cfg.rescale * scale[:, None] * bundle.total()
    backward_encoder(state, trace, grad_e + injection, grad)
    return EffectiveGradient(
        param_grad=grad,
        grad_e=grad_e,
        scale=scale,
        injection=injection,
    )


# -- Adam --


@dataclass
class AdamState:
    m: FloatArray
    v: FloatArray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(
    opt: AdamState,
    params: FloatArray,
    grad: FloatArray,
    lr: float,
) -> tuple[FloatArray, AdamState]:
    t = opt.t + 1
    m = opt.beta1 * opt.m + (1 - opt.beta1) * grad
    v = opt.beta2 * opt.v + (1 - opt.beta2) * grad**2
    m_hat = m / (1 - opt.beta1**t)
    v_hat = v / (1 - opt.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return new_params, AdamState(
        m=m,
        v=v,
        t=t,
        beta1=opt.beta1,
        beta2=opt.beta2,
        eps=opt.eps,
    )


# -- History --


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_objective: float
    lr: float
    checkpoint: bool
    val_ratios: SatisfactionRatios | None = None
    train_ratios: SatisfactionRatios | None = None

    def to_event(self) -> dict[str, Any]:
        return {
            "event": "epoch",
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_objective": self.val_objective,
            "lr": self.lr,
            "checkpoint": self.checkpoint,
            "val_ratios": (
                None if self.val_ratios is None else self.val_ratios.to_dict()
            ),
            "train_ratios": (
                None if self.train_ratios is None else self.train_ratios.to_dict()
            ),
        }

    @classmethod
    def from_event(cls, event: dict[str, Any]) -> EpochRecord:
        def ratios(key: str) -> SatisfactionRatios | None:
            data = event.get(key)
            return None if data is None else SatisfactionRatios.from_dict(data)

        return cls(
            epoch=int(event["epoch"]),
            train_loss=float(event["train_loss"]),
            val_objective=float(event["val_objective"]),
            lr=float(event["lr"]),
            checkpoint=bool(event["checkpoint"]),
            val_ratios=ratios("val_ratios"),
            train_ratios=ratios("train_ratios"),
        )


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def learning_rates(self) -> list[float]:
        return [r.lr for r in self.records]

    @property
    def checkpoints(self) -> list[EpochRecord]:
        return [r for r in self.records if r.checkpoint]


@dataclass
class TrainResult:
    best_state: AutoencoderState
    history: TrainHistory
    center: CenterState | None
    final_state: AutoencoderState


def _mean_ratios(ratios: Sequence[SatisfactionRatios]) -> SatisfactionRatios | None:
    if not ratios:
        return None

    def avg(name: str) -> float | None:
        values = [getattr(r, name) for r in ratios if getattr(r, name) is not None]
        return float(np.mean(values)) if values else None

    return SatisfactionRatios(
        normal=avg("normal"),
        anomalous=avg("anomalous"),
        monotonicity=avg("monotonicity"),
    )


def evaluate_objective(
    state: AutoencoderState,
    center: CenterState | None,
    batch: Batch,
    cfg: TrainConfig,
) -> tuple[float, SatisfactionRatios | None]:
    """Validation objective and, for the constrained models, their ratios."""
    if len(batch) == 0:
        return 0.0, None
    if cfg.model_kind == "AE_DSVDD":
        assert center is not None
        return aedsvdd_loss(state, center, batch, cfg.lam, cfg.recon_set), None
    trace = forward(state, batch.X)
    loss, _ = recon_loss(trace, batch.X, batch.labels == Label.NORMAL)
    return loss, satisfaction_ratio(trace.z, batch, cfg.ball, cfg.families)


def _check_finite(epoch: int, quantity: str, value: float) -> None:
    if not math.isfinite(value):
        raise NumericalError(epoch, quantity, value)


def train(
    splits: Sequence[RunSplit],
    cfg: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train one model on the training frames of a fold.

    A checkpoint is taken when the validation objective drops and, for CGAE
    and MCGAE, the combined validation satisfaction ratio also rises or is
    at least 0.95. After plateau_patience epochs without a checkpoint the
    learning rate halves, never below lr_min.
    """
    cfg.validate()
    arch = cfg.network.architecture(splits[0].run.feature_dim)
    init_seq, batch_seq, dir_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    state = init(arch, init_seq)
    batch_rng = np.random.default_rng(batch_seq)
    dir_rng = np.random.default_rng(dir_seq)

    val = split_batch(splits, "val")
    center: CenterState | None = None
    if cfg.model_kind == "AE_DSVDD":
        train_all = split_batch(splits, "train")
        normals = train_all.X[train_all.labels == Label.NORMAL]
        center = init_center(state.encode(normals))

    opt = AdamState.zeros(arch.n_params)
    lr = cfg.lr
    best = state
    best_objective = math.inf
    best_ratio = -math.inf
    stale = 0
    history = TrainHistory()

    for epoch in range(1, cfg.epochs + 1):
        losses: list[float] = []
        batch_ratios: list[SatisfactionRatios] = []
        for batch in sample_epoch(splits, cfg.batches, batch_rng):
            trace = forward(state, batch.X)
            if cfg.model_kind == "AE_DSVDD":
                assert center is not None
                recon_mask = select_recon_set(batch.labels, cfg.recon_set)
                loss, grad_z = aedsvdd_terms(
                    trace,
                    batch.X,
                    batch.labels,
                    center,
                    cfg.lam,
                    recon_mask,
                )
                grad, _ = backward(state, trace, batch.X, recon_mask, grad_z)
            else:
                recon_mask = select_recon_set(batch.labels, cfg.recon_set)
                loss, _ = recon_loss(trace, batch.X, recon_mask)
                batch_ratios.append(
                    satisfaction_ratio(trace.z, batch, cfg.ball, cfg.families),
                )
                bundle = compute_directions(
                    trace.z,
                    batch,
                    cfg.ball,
                    dir_rng,
                    cfg.families,
                )
                grad = effective_gradient(
                    state,
                    trace,
                    batch.X,
                    batch.labels,
                    bundle,
                    cfg,
                ).param_grad
            _check_finite(epoch, "training loss", loss)
            if not np.all(np.isfinite(grad)):
                raise NumericalError(epoch, "gradient", math.nan)
            params, opt = adam_step(opt, state.params, grad, lr)
            state = state.with_params(params)
            losses.append(loss)

        objective, val_ratios = evaluate_objective(state, center, val, cfg)
        _check_finite(epoch, "validation objective", objective)
        improved = objective < best_objective
        if improved and val_ratios is not None:
            combined = val_ratios.combined
            improved = combined > best_ratio or combined >= SATISFIED_ENOUGH
        if improved:
            best = state
            best_objective = objective
            if val_ratios is not None:
                best_ratio = val_ratios.combined
            stale = 0
        else:
            stale += 1

        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)) if losses else 0.0,
            val_objective=objective,
            lr=lr,
            checkpoint=improved,
            val_ratios=val_ratios,
            train_ratios=_mean_ratios(batch_ratios),
        )
        history.records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.debug("epoch %d: %s", epoch, record.to_event())

        if stale >= cfg.plateau_patience:
            new_lr = max(lr / 2, cfg.lr_min)
            if new_lr < lr:
                logger.info("epoch %d: learning rate %.3g -> %.3g", epoch, lr, new_lr)
            lr = new_lr
            stale = 0

    return TrainResult(
        best_state=best,
        history=history,
        center=center,
        final_state=state,
    )
