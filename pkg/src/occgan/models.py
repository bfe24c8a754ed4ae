"""Denoising-autoencoder generator, discriminator and frozen snapshot pairs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ndcore import ShapeError, Tensor, as_tensor, clamp, forward_op, leaky_relu, parameter, sigmoid, tanh

SCORE_EPS = 1e-6

_ACTIVATIONS = ("leaky_relu", "tanh", "identity")
_OUTPUTS = ("sigmoid", "identity")


def _activate(x: Tensor, kind: str, slope: float) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "tanh":
        return tanh(x)
    return x


class Dense:
    """Fully connected layer ``x @ W + b`` with uniform fan-in initialization."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = parameter(rng.uniform(-bound, bound, size=(n_out,)))

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return forward_op("add", forward_op("matmul", x, self.weight), self.bias)


def _as_batch(x, dim: int, what: str) -> Tensor:
    t = as_tensor(x)
    if t.ndim == 1:
        t = forward_op("reshape", t, shape=(1, t.shape[0]))
    if t.ndim != 2 or t.shape[1] != dim:
        raise ShapeError(f"{what} expects (batch, {dim}), got {t.shape}")
    return t


def _stack_layers(dims: Sequence[int], rng: np.random.Generator) -> list[Dense]:
    return [Dense(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]


class _Model:
    layers_by_name: dict[str, list[Dense]]

    def parameters(self) -> list[Tensor]:
        return [p for layers in self.layers_by_name.values() for layer in layers for p in layer.params]

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layers in self.layers_by_name.items():
            for i, layer in enumerate(layers):
                out[f"{name}.{i}.weight"] = layer.weight.data.copy()
                out[f"{name}.{i}.bias"] = layer.bias.data.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        if set(own) != set(state):
            raise ValueError(f"parameter names differ: {sorted(set(own) ^ set(state))}")
        for name, layers in self.layers_by_name.items():
            for i, layer in enumerate(layers):
                for attr in ("weight", "bias"):
                    arr = np.asarray(state[f"{name}.{i}.{attr}"], dtype=np.float64)
                    p = getattr(layer, attr)
                    if arr.shape != p.data.shape:
                        raise ShapeError(f"{name}.{i}.{attr}: expected {p.data.shape}, got {arr.shape}")
                    p.data = arr.copy()
                    p.grad = None

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for key, arr in sorted(self.state_dict().items()):
            h.update(key.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


class Generator(_Model):
    """Denoising autoencoder with an explicit encoder/decoder split.

    The encoder maps ``input_dim -> hidden... -> latent_dim`` with a linear
    latent layer; the decoder mirrors the hidden widths and ends with a
    logistic squash so reconstructions lie in [0, 1].
    """

    def __init__(self, input_dim: int, latent_dim: int = 16, hidden: Sequence[int] = (256, 64), *,
                 rng: np.random.Generator | None = None, seed: int = 0, activation: str = "leaky_relu",
                 output_activation: str = "sigmoid", slope: float = 0.2, version_tag: str = "live"):
        if latent_dim >= input_dim:
            raise ValueError(f"latent_dim ({latent_dim}) must be smaller than input_dim ({input_dim})")
        if activation not in _ACTIVATIONS or output_activation not in _OUTPUTS:
            raise ValueError(f"unsupported activation {activation!r}/{output_activation!r}")
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.output_activation = output_activation
        self.slope = slope
        self.version_tag = version_tag
        self.encoder = _stack_layers([input_dim, *self.hidden, latent_dim], rng)
        self.decoder = _stack_layers([latent_dim, *reversed(self.hidden), input_dim], rng)
        self.layers_by_name = {"encoder": self.encoder, "decoder": self.decoder}

    @property
    def encoder_params(self) -> list[Tensor]:
        return [p for layer in self.encoder for p in layer.params]

    @property
    def decoder_params(self) -> list[Tensor]:
        return [p for layer in self.decoder for p in layer.params]

    def architecture(self) -> dict:
        return {
            "kind": "generator",
            "input_dim": self.input_dim,
            "latent_dim": self.latent_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "output_activation": self.output_activation,
            "slope": self.slope,
        }

    def encode(self, x) -> Tensor:
        h = _as_batch(x, self.input_dim, "encode")
        for i, layer in enumerate(self.encoder):
            h = layer(h)
            if i < len(self.encoder) - 1:
                h = _activate(h, self.activation, self.slope)
        return h

    def decode(self, z) -> Tensor:
        h = _as_batch(z, self.latent_dim, "decode")
        for i, layer in enumerate(self.decoder):
            h = layer(h)
            if i < len(self.decoder) - 1:
                h = _activate(h, self.activation, self.slope)
        return sigmoid(h) if self.output_activation == "sigmoid" else h

    def forward(self, x) -> Tensor:
        return self.decode(self.encode(x))

    __call__ = forward

    def reconstruct(self, x) -> np.ndarray:
        """Inference-only forward pass returning a plain array."""
        return self.forward(np.asarray(x, dtype=np.float64)).data

    def snapshot(self, version_tag: str | None = None) -> "Generator":
        return snapshot(self, version_tag)


class Discriminator(_Model):
    """Binary scorer: 0 means real / good reconstruction, 1 means fake / bad."""

    def __init__(self, input_dim: int, hidden: Sequence[int] = (128, 64), *,
                 rng: np.random.Generator | None = None, seed: int = 0, slope: float = 0.2):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.input_dim = input_dim
        self.hidden = tuple(int(h) for h in hidden)
        self.slope = slope
        self.layers = _stack_layers([input_dim, *self.hidden, 1], rng)
        self.layers_by_name = {"layers": self.layers}

    @property
    def params(self) -> list[Tensor]:
        return self.parameters()

    def architecture(self) -> dict:
        return {"kind": "discriminator", "input_dim": self.input_dim, "hidden": list(self.hidden), "slope": self.slope}

    def score(self, x) -> Tensor:
        """Per-sample scores of shape ``(batch,)``, clamped inside (0, 1)."""
        h = _as_batch(x, self.input_dim, "score")
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = leaky_relu(h, self.slope)
        p = clamp(sigmoid(h), SCORE_EPS, 1.0 - SCORE_EPS)
        return forward_op("reshape", p, shape=(h.shape[0],))

    __call__ = score


def build_model(arch: dict) -> Generator | Discriminator:
    arch = dict(arch)
    kind = arch.pop("kind")
    if kind == "generator":
        return Generator(arch.pop("input_dim"), **arch)
    if kind == "discriminator":
        return Discriminator(arch.pop("input_dim"), **arch)
    raise ValueError(f"unknown model kind {kind!r}")


def snapshot(model, version_tag: str | None = None):
    """Independent deep copy of a model's parameters."""
    arch = model.architecture()
    copy = build_model(arch)
    copy.load_state_dict(model.state_dict())
    if isinstance(copy, Generator):
        copy.version_tag = version_tag or model.version_tag
    return copy


@dataclass
class SnapshotPair:
    """Frozen (old, new) generator pair selected in phase one."""

    g_old: Generator
    g_new: Generator
    loss_old: float
    loss_new: float
    eta: float
    eta_reached: bool = True

    def __post_init__(self):
        if self.eta_reached and not self.ratio > self.eta:
            raise ValueError(f"loss ratio {self.ratio:.6g} does not exceed eta={self.eta}")

    @property
    def ratio(self) -> float:
        return self.loss_old / self.loss_new if self.loss_new > 0 else float("inf")

    def hashes(self) -> tuple[str, str]:
        return self.g_old.param_hash(), self.g_new.param_hash()


def iter_params(models: Iterable[_Model]) -> list[Tensor]:
    return [p for m in models for p in m.parameters()]
