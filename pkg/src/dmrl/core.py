"""Flat-parameter multilayer perceptrons with hand-written backprop.

Parameters live in a single float64 vector. The layout is one weight block
``(out, in)`` followed by one bias block ``(out, 1)`` per layer, in order.
Every function here is pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

HIDDEN_ACTIVATIONS = ("relu",)
HEADS = ("linear", "softmax")


class ShapeError(ValueError):
    """Raised when array shapes or parameter layouts do not line up."""


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[tuple[int, str], ...]
    output: tuple[int, str]

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")
        for width, act in self.hidden:
            if width < 1:
                raise ValueError(f"hidden width must be >= 1, got {width}")
            if act not in HIDDEN_ACTIVATIONS:
                raise ValueError(f"unsupported hidden activation {act!r}")
        width, head = self.output
        if width < 1:
            raise ValueError("output width must be >= 1")
        if head not in HEADS:
            raise ValueError(f"unsupported output head {head!r}")

    @classmethod
    def build(cls, input_dim: int, hidden: Sequence[int], output_dim: int, head: str = "linear") -> "MlpSpec":
        return cls(int(input_dim), tuple((int(w), "relu") for w in hidden), (int(output_dim), head))

    @property
    def dims(self) -> list[int]:
        return [self.input_dim, *(w for w, _ in self.hidden), self.output[0]]

    @property
    def output_dim(self) -> int:
        return self.output[0]

    @property
    def head(self) -> str:
        return self.output[1]

    @property
    def layout(self) -> list[tuple[int, int]]:
        """(rows, cols) of every block: W_0, b_0, W_1, b_1, ..."""
        blocks = []
        dims = self.dims
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            blocks.append((fan_out, fan_in))
            blocks.append((fan_out, 1))
        return blocks

    @property
    def n_params(self) -> int:
        return sum(r * c for r, c in self.layout)


def _unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.n_params:
        raise ShapeError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    offset = 0
    dims = spec.dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = params[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
        offset += fan_out * fan_in
        b = params[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    dims = spec.dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_out * fan_in))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _as_batch(spec: MlpSpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"input must have trailing dimension {spec.input_dim}, got shape {x.shape}")
    return x, single


def _forward_cache(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    layers = _unpack(spec, params)
    activations = [x]
    pre = []
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        pre.append(z)
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            activations.append(h)
    return layers, activations, pre


def forward_logits(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Network output before the head nonlinearity (identical to forward for linear heads)."""
    xb, single = _as_batch(spec, x)
    _, _, pre = _forward_cache(spec, params, xb)
    out = pre[-1]
    return out[0] if single else out


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one input vector or a (batch, input_dim) array."""
    out = forward_logits(spec, params, x)
    if spec.head == "softmax":
        out = softmax(out)
    return out


def backward_logits(spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum(upstream * logits) with respect to the flat parameters.

    For batched input, ``upstream`` has shape (batch, output_dim) and the
    per-example gradients are summed.
    """
    xb, single = _as_batch(spec, x)
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != (xb.shape[0], spec.output_dim):
        raise ShapeError(f"upstream gradient shape {np.shape(upstream)} does not match output")
    layers, activations, pre = _forward_cache(spec, params, xb)
    grads: list[np.ndarray] = []
    delta = g
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h = activations[i]
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ h).ravel())
        if i > 0:
            delta = (delta @ w) * (pre[i - 1] > 0.0)
    grads.reverse()
    return np.concatenate(grads)


def backward(spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Exact gradient of <forward(x), upstream> with respect to the flat parameters."""
    if spec.head == "softmax":
        xb, single = _as_batch(spec, x)
        g = np.asarray(upstream, dtype=np.float64)
        if single and g.ndim == 1:
            g = g[None, :]
        if g.shape != (xb.shape[0], spec.output_dim):
            raise ShapeError(f"upstream gradient shape {np.shape(upstream)} does not match output")
        p = softmax(forward_logits(spec, params, xb))
        upstream = p * (g - np.sum(g * p, axis=1, keepdims=True))
        x = xb
    return backward_logits(spec, params, x, upstream)


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeError(f"parameter shape {params.shape} != gradient shape {grad.shape}")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    out = params - lr * grad
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite parameters after SGD step")
    return out


def clip_by_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm > 0:
        return grad * (max_norm / norm)
    return grad
