"""Dense autoencoder with exact forward/backward passes.

Parameters live in one flat float64 vector; layers are views into it. The
encoding layer and the output layer are linear, hidden layers use the
configured activation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from mcgae.errors import ConfigError
from mcgae.models import BoolArray, FloatArray

Activation = Literal["relu", "tanh"]


@dataclass(frozen=True)
class ArchitectureSpec:
    input_dim: int
    encoder_widths: tuple[int, ...]  # last entry is the latent dim D_l
    decoder_widths: tuple[int, ...]  # last entry is input_dim
    activation: Activation = "relu"

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    @property
    def n_encoder_layers(self) -> int:
        return len(self.encoder_widths)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.encoder_widths, *self.decoder_widths]
        return list(zip(dims[:-1], dims[1:], strict=True))

    @property
    def linear_layers(self) -> list[bool]:
        n = len(self.layer_shapes)
        return [i in (self.n_encoder_layers - 1, n - 1) for i in range(n)]

    @property
    def offsets(self) -> list[tuple[int, int, int]]:
        """(weight start, bias start, end) of every layer in the flat vector."""
        out: list[tuple[int, int, int]] = []
        pos = 0
        for fan_in, fan_out in self.layer_shapes:
            w_end = pos + fan_in * fan_out
            out.append((pos, w_end, w_end + fan_out))
            pos = w_end + fan_out
        return out

    @property
    def n_params(self) -> int:
        return self.offsets[-1][2]

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigError("network.input_dim", "must be positive")
        if not self.encoder_widths or not self.decoder_widths:
            raise ConfigError("network", "encoder and decoder need at least one layer")
        if any(w < 1 for w in (*self.encoder_widths, *self.decoder_widths)):
            raise ConfigError("network", "layer widths must be positive")
        if self.decoder_widths[-1] != self.input_dim:
            raise ConfigError(
                "network.decoder_widths",
                f"must end in input_dim={self.input_dim}",
            )
        if self.activation not in ("relu", "tanh"):
            raise ConfigError("network.activation", "expected 'relu' or 'tanh'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "encoder_widths": list(self.encoder_widths),
            "decoder_widths": list(self.decoder_widths),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArchitectureSpec:
        return cls(
            input_dim=int(data["input_dim"]),
            encoder_widths=tuple(int(w) for w in data["encoder_widths"]),
            decoder_widths=tuple(int(w) for w in data["decoder_widths"]),
            activation=data.get("activation", "relu"),
        )


@dataclass(frozen=True)
class AutoencoderState:
    arch: ArchitectureSpec
    params: FloatArray

    def layers(self) -> list[tuple[FloatArray, FloatArray]]:
        out: list[tuple[FloatArray, FloatArray]] = []
        for (fan_in, fan_out), (w0, b0, end) in zip(
            self.arch.layer_shapes,
            self.arch.offsets,
            strict=True,
        ):
            out.append(
                (self.params[w0:b0].reshape(fan_in, fan_out), self.params[b0:end]),
            )
        return out

    def with_params(self, params: FloatArray) -> AutoencoderState:
        return AutoencoderState(arch=self.arch, params=params)

    def encode(self, X: FloatArray) -> FloatArray:
        return forward(self, X).z


@dataclass
class ForwardTrace:
    inputs: list[FloatArray] = field(default_factory=list)  # input of each layer
    pre: list[FloatArray] = field(default_factory=list)  # pre-activations
    z: FloatArray = field(default_factory=lambda: np.empty((0, 0)))
    x_hat: FloatArray = field(default_factory=lambda: np.empty((0, 0)))


def _act(kind: str, h: FloatArray) -> FloatArray:
    return np.maximum(h, 0.0) if kind == "relu" else np.tanh(h)


def _act_grad(kind: str, h: FloatArray) -> FloatArray:
    if kind == "relu":
        return (h > 0.0).astype(np.float64)
    return 1.0 - np.tanh(h) ** 2


def init(
    arch: ArchitectureSpec,
    seed: int | np.random.SeedSequence,
) -> AutoencoderState:
    """Uniform fan-in initialization, biases zero."""
    arch.validate()
    rng = np.random.default_rng(seed)
    params = np.zeros(arch.n_params)
    for (fan_in, _), (w0, b0, _end), linear in zip(
        arch.layer_shapes,
        arch.offsets,
        arch.linear_layers,
        strict=True,
    ):
        gain = 6.0 if arch.activation == "relu" and not linear else 3.0
        limit = math.sqrt(gain / fan_in)
        params[w0:b0] = rng.uniform(-limit, limit, size=b0 - w0)
    return AutoencoderState(arch=arch, params=params)


def forward(state: AutoencoderState, X: FloatArray) -> ForwardTrace:
    arch = state.arch
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValueError(
            f"expected inputs of shape (n, {arch.input_dim}), got {X.shape}",
        )
    trace = ForwardTrace()
    a = X
    for i, ((W, b), linear) in enumerate(
        zip(state.layers(), arch.linear_layers, strict=True),
    ):
        trace.inputs.append(a)
        h = a @ W + b
        trace.pre.append(h)
        a = h if linear else _act(arch.activation, h)
        if i == arch.n_encoder_layers - 1:
            trace.z = a
    trace.x_hat = a
    return trace


def _selection(n: int, selected: BoolArray | None) -> BoolArray:
    if selected is None:
        return np.ones(n, dtype=bool)
    if selected.shape != (n,):
        raise ValueError(f"selection mask has shape {selected.shape}, expected ({n},)")
    return selected


def recon_loss(
    trace: ForwardTrace,
    X: FloatArray,
    selected: BoolArray | None = None,
) -> tuple[float, bool]:
    """Mean squared L2 reconstruction error over the selected rows.

    Returns (loss, empty); an empty selection gives (0.0, True).
    """
    sel = _selection(X.shape[0], selected)
    n_sel = int(np.count_nonzero(sel))
    if n_sel == 0:
        return 0.0, True
    residual = X[sel] - trace.x_hat[sel]
    return float(np.sum(residual**2) / n_sel), False


def _backprop(
    state: AutoencoderState,
    trace: ForwardTrace,
    delta: FloatArray,
    layers: range,
    grad: FloatArray,
) -> FloatArray:
    """Chain `delta` (gradient at the output of layers[-1]) down to layers[0].

    Accumulates parameter gradients into `grad` and returns the gradient at
    the input of layers[0].
    """
    arch = state.arch
    weights = state.layers()
    for i in reversed(layers):
        W, _ = weights[i]
        if not arch.linear_layers[i]:
            delta = delta * _act_grad(arch.activation, trace.pre[i])
        w0, b0, end = arch.offsets[i]
        grad[w0:b0] += (trace.inputs[i].T @ delta).ravel()
        grad[b0:end] += delta.sum(axis=0)
        delta = delta @ W.T
    return delta


def backward_decoder(
    state: AutoencoderState,
    trace: ForwardTrace,
    X: FloatArray,
    selected: BoolArray | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Decoder part of ∇_θ recon_loss, and the per-sample ∇_e recon_loss."""
    sel = _selection(X.shape[0], selected)
    n_sel = int(np.count_nonzero(sel))
    grad = np.zeros(state.arch.n_params)
    delta = np.zeros_like(trace.x_hat)
    if n_sel:
        delta[sel] = -2.0 * (X[sel] - trace.x_hat[sel]) / n_sel
    n_layers = len(state.arch.layer_shapes)
    grad_e = _backprop(
        state,
        trace,
        delta,
        range(state.arch.n_encoder_layers, n_layers),
        grad,
    )
    return grad, grad_e


def backward_encoder(
    state: AutoencoderState,
    trace: ForwardTrace,
    signal: FloatArray,
    grad: FloatArray | None = None,
) -> FloatArray:
    """Chain an encoding-space signal through the encoder into `grad`."""
    if signal.shape != trace.z.shape:
        raise ValueError(
            f"encoding signal has shape {signal.shape}, expected {trace.z.shape}",
        )
    grad = np.zeros(state.arch.n_params) if grad is None else grad
    _backprop(state, trace, signal, range(state.arch.n_encoder_layers), grad)
    return grad


def backward(
    state: AutoencoderState,
    trace: ForwardTrace,
    X: FloatArray,
    selected: BoolArray | None = None,
    encoding_injection: FloatArray | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Return (param_grad, grad_e).

    param_grad is ∇_θ recon_loss plus the injection chained through the
    encoder; grad_e is the per-sample ∇_e recon_loss without the injection.
    """
    if encoding_injection is not None and encoding_injection.shape != trace.z.shape:
        raise ValueError(
            f"injection has shape {encoding_injection.shape}, "
            f"expected {trace.z.shape}",
        )
    grad, grad_e = backward_decoder(state, trace, X, selected)
    signal = grad_e if encoding_injection is None else grad_e + encoding_injection
    backward_encoder(state, trace, signal, grad)
    return grad, grad_e
