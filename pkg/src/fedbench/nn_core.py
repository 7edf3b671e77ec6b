"""Dense neural-network engine: forward pass, exact gradients, SGD.

All arithmetic is float64. The parameter vector layout is canonical:
layers in order, each layer's (out x in) weight matrix row-major, then its
bias. Everything downstream (averaging, posterior fitting, checkpoints)
relies on that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NumericError, ShapeError
from .rng import RngStream


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


@dataclass(frozen=True)
class MlpArch:
    """Layer sizes (input dim, hidden dims..., class count) and hidden activation."""

    layer_sizes: tuple[int, ...]
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ShapeError(f"need at least input and output sizes, got {self.layer_sizes}")
        if any(s < 1 for s in self.layer_sizes):
            raise ShapeError(f"layer sizes must be >= 1, got {self.layer_sizes}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) per weight layer."""
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


@dataclass
class MlpModel:
    """Per-layer weights (out x in) and biases matching an architecture."""

    arch: MlpArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        shapes = self.arch.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeError(
                f"expected {len(shapes)} layers, got {len(self.weights)} weight "
                f"and {len(self.biases)} bias arrays"
            )
        for layer, (w, b, (out, inp)) in enumerate(zip(self.weights, self.biases, shapes)):
            if w.shape != (out, inp):
                raise ShapeError(f"layer {layer}: expected weights {(out, inp)}, got {w.shape}")
            if b.shape != (out,):
                raise ShapeError(f"layer {layer}: expected bias ({out},), got {b.shape}")


@dataclass(frozen=True)
class SgdConfig:
    """Hyper-parameters for SGD with momentum; prox_mu == 0 is plain SGD."""

    step_size: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    prox_mu: float = 0.0
    batch_size: int = 40

    def __post_init__(self) -> None:
        if self.step_size < 0.0:
            raise ValueError(f"step_size must be nonnegative, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0 or self.prox_mu < 0.0:
            raise ValueError("weight_decay and prox_mu must be nonnegative")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


def zero_model(arch: MlpArch) -> MlpModel:
    shapes = arch.layer_shapes()
    return MlpModel(
        arch,
        [np.zeros(s) for s in shapes],
        [np.zeros(s[0]) for s in shapes],
    )


def init_model(arch: MlpArch, rng: RngStream) -> MlpModel:
    """Glorot-uniform weights, zero biases, drawn from the given stream."""
    weights, biases = [], []
    for out, inp in arch.layer_shapes():
        limit = np.sqrt(6.0 / (inp + out))
        u = rng.uniforms(out * inp).reshape(out, inp)
        weights.append((2.0 * u - 1.0) * limit)
        biases.append(np.zeros(out))
    return MlpModel(arch, weights, biases)


def flatten(model: MlpModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten(v: np.ndarray, arch: MlpArch) -> MlpModel:
    v = np.asarray(v, dtype=np.float64)
    expected = arch.param_count()
    if v.ndim != 1 or len(v) != expected:
        raise ShapeError(f"expected parameter vector of length {expected}, got {v.shape}")
    weights, biases = [], []
    pos = 0
    for out, inp in arch.layer_shapes():
        weights.append(v[pos : pos + out * inp].reshape(out, inp).copy())
        pos += out * inp
        biases.append(v[pos : pos + out].copy())
        pos += out
    return MlpModel(arch, weights, biases)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _apply_activation(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def _forward_cached(model: MlpModel, batch: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Activations a_0..a_{L-1} and pre-activations z_1..z_L (z_L = logits)."""
    acts = [batch]
    pre: list[np.ndarray] = []
    h = batch
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        if layer < last:
            h = _apply_activation(z, model.arch.activation)
            acts.append(h)
    return acts, pre


def _check_batch(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.arch.input_dim:
        raise ShapeError(
            f"expected batch with {model.arch.input_dim} columns, got shape {batch.shape}"
        )
    return batch


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Class probabilities (rows x C); each row is a softmax distribution."""
    batch = _check_batch(model, batch)
    _, pre = _forward_cached(model, batch)
    return _softmax(pre[-1])


def loss_and_grad(
    model: MlpModel,
    batch: np.ndarray,
    targets: np.ndarray,
    anchor: np.ndarray | None,
    cfg: SgdConfig,
) -> tuple[float, np.ndarray]:
    """Soft cross-entropy + L2 + proximal loss, with its exact gradient.

    Targets are probability rows; hard labels are passed as one-hot rows.
    The proximal term (prox_mu/2)*||w - anchor||^2 applies only when an
    anchor is given and prox_mu > 0.
    """
    batch = _check_batch(model, batch)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (batch.shape[0], model.arch.class_count):
        raise ShapeError(
            f"expected targets of shape {(batch.shape[0], model.arch.class_count)}, "
            f"got {targets.shape}"
        )
    if not np.isfinite(batch).all() or not np.isfinite(targets).all():
        raise NumericError("non-finite values in batch or targets")
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=np.float64)
        if anchor.shape != (model.arch.param_count(),):
            raise ShapeError(
                f"expected anchor of length {model.arch.param_count()}, got {anchor.shape}"
            )

    n = batch.shape[0]
    acts, pre = _forward_cached(model, batch)
    probs = _softmax(pre[-1])
    loss = float(-(targets * _log_softmax(pre[-1])).sum() / n)

    # Backprop; d(loss)/d(logits) of mean soft cross-entropy is (p - t)/n.
    dz = (probs - targets) / n
    grads_w: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = dz.T @ acts[layer]
        grads_b[layer] = dz.sum(axis=0)
        if layer > 0:
            da = dz @ model.weights[layer]
            dz = da * _activation_grad(pre[layer - 1], model.arch.activation)

    grad = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])

    if cfg.weight_decay > 0.0 or (cfg.prox_mu > 0.0 and anchor is not None):
        w = flatten(model)
        if cfg.weight_decay > 0.0:
            loss += 0.5 * cfg.weight_decay * float(w @ w)
            grad += cfg.weight_decay * w
        if cfg.prox_mu > 0.0 and anchor is not None:
            diff = w - anchor
            loss += 0.5 * cfg.prox_mu * float(diff @ diff)
            grad += cfg.prox_mu * diff
    return loss, grad


def sgd_step(
    model: MlpModel,
    buffer: np.ndarray,
    grad: np.ndarray,
    cfg: SgdConfig,
    step_size: float | None = None,
) -> tuple[MlpModel, np.ndarray]:
    """One momentum-SGD update; returns the new model and momentum buffer."""
    count = model.arch.param_count()
    if buffer.shape != (count,) or grad.shape != (count,):
        raise ShapeError(
            f"expected buffer and grad of length {count}, got {buffer.shape} and {grad.shape}"
        )
    eta = cfg.step_size if step_size is None else step_size
    new_buffer = cfg.momentum * buffer + grad
    new_w = flatten(model) - eta * new_buffer
    return unflatten(new_w, model.arch), new_buffer
