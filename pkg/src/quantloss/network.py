"""Minimal fully-connected feed-forward network with inverted dropout.

The forward pass records per-layer pre-activations and activations so the
learning-rate machinery can read off the largest penultimate activation
(``ForwardTrace.k_z``).  The output layer is always linear: regression heads
emit raw predictions and classification heads emit the latent score that the
sBQC loss maps to a probability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


def activation_at_zero(kind: str) -> float:
    """Value of the activation function at 0 (the g(0) of the layer constant)."""
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}")
    return 0.0


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    """Network shape: input width, hidden widths, output width, activation, dropout.

    ``dropout`` is a single rate shared by every hidden layer or one rate per
    hidden layer; the output layer never drops.
    """

    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    dropout: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"zero-width hidden layer in {self.hidden_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        d = self.dropout
        if isinstance(d, (int, float)):
            d = (float(d),) * len(self.hidden_sizes)
        else:
            d = tuple(float(p) for p in d)
            if len(d) == 0:
                d = (0.0,) * len(self.hidden_sizes)
        if len(d) != len(self.hidden_sizes):
            raise ValueError(
                f"need one dropout rate per hidden layer ({len(self.hidden_sizes)}), got {len(d)}"
            )
        if any(not 0.0 <= p < 1.0 for p in d):
            raise ValueError(f"dropout rates must lie in [0, 1), got {d}")
        object.__setattr__(self, "dropout", d)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        sizes = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return list(zip(sizes[:-1], sizes[1:]))

    def num_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_dims)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "dropout": list(self.dropout),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(
            input_dim=d["input_dim"],
            hidden_sizes=tuple(d["hidden_sizes"]),
            output_dim=d["output_dim"],
            activation=d.get("activation", "relu"),
            dropout=tuple(d.get("dropout", ())),
        )


@dataclass
class MLPModel:
    spec: LayerSpec
    seed: int
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)


@dataclass
class ForwardTrace:
    """Per-layer records of one forward pass.

    ``activations[0]`` is the input batch and ``activations[-2]`` is the input
    to the final layer, whose largest magnitude over the batch is ``k_z``.
    Dropout masks already include the inverted-dropout 1/(1-p) scaling.
    """

    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    dropout_masks: list[np.ndarray | None]
    k_z: float


def init_model(spec: LayerSpec, seed: int) -> MLPModel:
    """Fan-in-scaled uniform weights (bound sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(spec=spec, seed=seed, weights=weights, biases=biases)


def forward(
    model: MLPModel, batch: np.ndarray, train_mode: bool = False, seed: int = 0
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the batch through the network, recording the trace.

    Dropout is applied to hidden activations only when ``train_mode`` is set,
    with inverted scaling so inference needs no rescale.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ValueError(
            f"batch must be (m, {model.spec.input_dim}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in input batch")
    rng = np.random.default_rng(seed) if train_mode else None
    n_layers = len(model.weights)
    pre, acts, masks = [], [x], []
    a = x
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if layer == n_layers - 1:
            a = z
            masks.append(None)
        else:
            a = _act(model.spec.activation, z)
            p = model.spec.dropout[layer]
            if train_mode and p > 0.0:
                mask = (rng.random(a.shape) >= p) / (1.0 - p)
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
        acts.append(a)
    k_z = float(np.max(np.abs(acts[-2]))) if acts[-2].size else 0.0
    return acts[-1], ForwardTrace(pre, acts, masks, k_z)


def backward(
    model: MLPModel, trace: ForwardTrace, output_grad: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backpropagate d(loss)/d(outputs) to parameter gradients.

    Returns (weight_grads, bias_grads) shaped like the model parameters.
    Dropout masks recorded in the trace are reused, so the gradient matches
    the exact function computed by the forward pass.
    """
    n_layers = len(model.weights)
    if len(trace.activations) != n_layers + 1:
        raise ValueError("trace does not match model depth")
    g = np.asarray(output_grad, dtype=float)
    if g.shape != trace.activations[-1].shape:
        raise ValueError(
            f"output_grad shape {g.shape} does not match outputs {trace.activations[-1].shape}"
        )
    weight_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    bias_grads: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = g  # output layer is linear, so d loss / d z_L = output_grad
    for layer in range(n_layers - 1, -1, -1):
        a_prev = trace.activations[layer]
        if a_prev.shape[1] != model.weights[layer].shape[0]:
            raise ValueError("trace does not match model shapes")
        weight_grads[layer] = a_prev.T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            da = delta @ model.weights[layer].T
            mask = trace.dropout_masks[layer - 1]
            if mask is not None:
                da = da * mask
            delta = da * _act_grad(model.spec.activation, trace.pre_activations[layer - 1])
    return weight_grads, bias_grads


def flatten_arrays(weights: list[np.ndarray], biases: list[np.ndarray]) -> np.ndarray:
    """Concatenate parameter arrays in the fixed order W1, b1, W2, b2, ... (row-major)."""
    parts = []
    for w, b in zip(weights, biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def flatten_params(model: MLPModel) -> np.ndarray:
    return flatten_arrays(model.weights, model.biases)


def unflatten_params(model: MLPModel, flat: np.ndarray) -> MLPModel:
    """New model with parameters taken from the flat vector (inverse of flatten)."""
    flat = np.asarray(flat, dtype=float)
    expected = model.spec.num_params()
    if flat.shape != (expected,):
        raise ValueError(f"expected a flat vector of length {expected}, got {flat.shape}")
    weights, biases = [], []
    k = 0
    for fan_in, fan_out in model.spec.layer_dims:
        weights.append(flat[k : k + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        k += fan_in * fan_out
        biases.append(flat[k : k + fan_out].copy())
        k += fan_out
    return MLPModel(spec=model.spec, seed=model.seed, weights=weights, biases=biases)


def set_flat_params(model: MLPModel, flat: np.ndarray) -> None:
    """Write a flat parameter vector into the model arrays in place."""
    flat = np.asarray(flat, dtype=float)
    expected = model.spec.num_params()
    if flat.shape != (expected,):
        raise ValueError(f"expected a flat vector of length {expected}, got {flat.shape}")
    k = 0
    for w, b in zip(model.weights, model.biases):
        w[...] = flat[k : k + w.size].reshape(w.shape)
        k += w.size
        b[...] = flat[k : k + b.size]
        k += b.size


def save_checkpoint(model: MLPModel, path) -> None:
    """Write the model as a single JSON document (weights row-major).

    JSON floats round-trip exactly, so a loaded checkpoint reproduces
    predictions bit for bit on the same platform.
    """
    doc = {
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> MLPModel:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    spec = LayerSpec.from_dict(doc["spec"])
    weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    for (fan_in, fan_out), w, b in zip(spec.layer_dims, weights, biases):
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ValueError("checkpoint arrays do not match the declared spec")
    return MLPModel(spec=spec, seed=int(doc["seed"]), weights=weights, biases=biases)
