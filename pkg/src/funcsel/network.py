"""Feedforward ReLU network with a linear output unit.

Parameters live per layer: ``weights[h]`` has shape ``(L_{h+1}, L_h)`` and
``biases[h]`` length ``L_{h+1}``.  The flat view is layer-major, weights
row-major before the layer's bias; :mod:`funcsel.evidence` indexes into it.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TypeAlias

import numpy as np

from funcsel.errors import ConfigError, ShapeError


@dataclass(frozen=True, eq=False)
class NetworkParams:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases must have one entry per layer")
        if len(self.weights) < 2:
            raise ShapeError("network needs at least one hidden layer (H >= 2)")
        for h, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {h + 1}: bias does not match weight rows")
            if h and w.shape[1] != self.weights[h - 1].shape[0]:
                raise ShapeError(f"layer {h + 1}: input width does not chain")
        if self.weights[-1].shape[0] != 1:
            raise ShapeError("output layer must have width 1")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *(w.shape[0] for w in self.weights))

    @property
    def first_layer(self) -> np.ndarray:
        return self.weights[0]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, widths: Sequence[int], vector: np.ndarray) -> NetworkParams:
        vector = np.asarray(vector, dtype=np.float64)
        expected = param_count(widths)
        if vector.shape != (expected,):
            raise ShapeError(
                f"flat vector has {vector.size} entries, widths {tuple(widths)} "
                f"need {expected}"
            )
        weights: list[np.ndarray] = []
        biases: list[np.ndarray] = []
        pos = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(vector[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(vector[pos : pos + fan_out].copy())
            pos += fan_out
        return cls(tuple(weights), tuple(biases))

    def copy(self) -> NetworkParams:
        return NetworkParams(
            tuple(w.copy() for w in self.weights), tuple(b.copy() for b in self.biases)
        )

    def with_first_layer(self, first: np.ndarray) -> NetworkParams:
        return NetworkParams((first, *self.weights[1:]), self.biases)


#: Gradient with respect to :class:`NetworkParams`, same layout.
GradientBuffer: TypeAlias = NetworkParams


def param_count(widths: Sequence[int]) -> int:
    """``(J + 1) L_1 + sum_h (L_{h-1} + 1) L_h``."""
    return sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))


def first_layer_slice(widths: Sequence[int]) -> slice:
    """Flat indices of the first-layer weight matrix."""
    return slice(0, widths[0] * widths[1])


def architecture(n_features: int, hidden: Sequence[int]) -> tuple[int, ...]:
    if not hidden or any(h < 1 for h in hidden):
        raise ConfigError("hidden widths must be a non-empty list of positive ints")
    return (n_features, *hidden, 1)


def init_params(widths: Sequence[int], rng: np.random.Generator) -> NetworkParams:
    """Gaussian weights with standard deviation sqrt(2 / fan_in), zero biases."""
    weights = tuple(
        rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        for fan_in, fan_out in zip(widths[:-1], widths[1:])
    )
    biases = tuple(np.zeros(fan_out) for fan_out in widths[1:])
    return NetworkParams(weights, biases)


def zeros_like(params: NetworkParams) -> GradientBuffer:
    return NetworkParams(
        tuple(np.zeros_like(w) for w in params.weights),
        tuple(np.zeros_like(b) for b in params.biases),
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _check_input(params: NetworkParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.widths[0]:
        raise ShapeError(
            f"expected {params.widths[0]} input features, got shape {x.shape}"
        )
    return x


def _forward_pass(
    params: NetworkParams, x: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Layer inputs and pre-activations for a 2-D batch."""
    inputs = [x]
    pre: list[np.ndarray] = []
    a = x
    last = len(params.weights) - 1
    for h, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if h == last else np.maximum(z, 0.0)
        inputs.append(a)
    return inputs, pre


def forward(params: NetworkParams, features: np.ndarray) -> float | np.ndarray:
    """Network output for one feature vector (float) or a batch (1-D array)."""
    x = _check_input(params, features)
    inputs, _ = _forward_pass(params, np.atleast_2d(x))
    out = inputs[-1][:, 0]
    return float(out[0]) if x.ndim == 1 else out


def data_loss_and_grad(
    params: NetworkParams,
    features: np.ndarray,
    responses: np.ndarray,
    noise_var: float,
) -> tuple[float, GradientBuffer]:
    """``sum (y - f)^2 / (2 noise_var)`` and its exact gradient.

    The ReLU derivative at exactly zero is taken as zero.
    """
    if not noise_var > 0:
        raise ConfigError(f"noise variance must be positive, got {noise_var}")
    x = np.atleast_2d(_check_input(params, features))
    y = np.asarray(responses, dtype=np.float64).ravel()
    if x.shape[0] == 0 or y.shape[0] != x.shape[0]:
        raise ShapeError(
            f"batch has {x.shape[0]} feature rows and {y.shape[0]} responses"
        )
    inputs, pre = _forward_pass(params, x)
    resid = inputs[-1][:, 0] - y
    loss = float(resid @ resid) / (2.0 * noise_var)

    n_layers = len(params.weights)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    delta = (resid / noise_var)[:, None]
    for h in range(n_layers - 1, -1, -1):
        grad_w[h] = delta.T @ inputs[h]
        grad_b[h] = delta.sum(axis=0)
        if h:
            delta = (delta @ params.weights[h]) * (pre[h - 1] > 0.0)
    return loss, NetworkParams(tuple(grad_w), tuple(grad_b))
