"""Minimal dense-network kernel with exact reverse-mode gradients.

The learner only ever needs multilayer perceptrons, so this implements
fixed-topology backprop rather than a general autodiff graph: affine
layers, a small set of activations, an Adam optimizer and a versioned
checkpoint format. Float32 by default; switch to float64 when validating
gradients against finite differences.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1

ACTIVATIONS = ("linear", "relu", "tanh", "softplus")


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "softplus":
        # log(1 + e^z), stable for large |z|
        return np.logaddexp(0.0, z)
    raise ValueError(f"unknown activation {name!r}")


def _act_backward(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - out * out
    if name == "softplus":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


class NonFiniteGradient(RuntimeError):
    """Raised by the optimizer when a gradient went NaN or infinite."""


class DenseNet:
    """Fully connected network with one activation per layer.

    ``sizes`` lists the widths including input and output; ``activations``
    has one entry per weight layer. Weights start uniform with fan-in
    scaling, biases at zero.
    """

    def __init__(self, sizes: Sequence[int], activations: Sequence[str],
                 rng: np.random.Generator, dtype=np.float32):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activations = tuple(activations)
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype))

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray):
        """Forward pass returning (output, cache) for a later backward call."""
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != layer width {self.sizes[0]}")
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            out = _act_forward(act, z)
            cache.append((h, z, out))
            h = out
        return (h[0] if squeeze else h), (cache, squeeze)

    def backward(self, cache, grad_out: np.ndarray):
        """Exact gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns (grads, grad_input) where grads is a list of (dW, db) pairs
        in layer order.
        """
        layers, squeeze = cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if squeeze:
            g = g.reshape(1, -1)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        for idx in range(len(self.weights) - 1, -1, -1):
            h, z, out = layers[idx]
            gz = g * _act_backward(self.activations[idx], z, out)
            grads[idx] = (h.T @ gz, gz.sum(axis=0))
            g = gz @ self.weights[idx].T
        return grads, (g[0] if squeeze else g)

    # -- parameter plumbing --------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def clone(self) -> "DenseNet":
        twin = DenseNet.__new__(DenseNet)
        twin.sizes = self.sizes
        twin.activations = self.activations
        twin.dtype = self.dtype
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def copy_from(self, other: "DenseNet") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs

    def save(self, path: str | Path) -> None:
        arrays = {"version": np.array(CHECKPOINT_VERSION),
                  "sizes": np.array(self.sizes),
                  "activations": np.array(self.activations),
                  "dtype": np.array(str(self.dtype))}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "DenseNet":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            net = cls.__new__(cls)
            net.sizes = tuple(int(s) for s in data["sizes"])
            net.activations = tuple(str(a) for a in data["activations"])
            net.dtype = np.dtype(str(data["dtype"]))
            net.weights = [data[f"w{i}"] for i in range(len(net.sizes) - 1)]
            net.biases = [data[f"b{i}"] for i in range(len(net.sizes) - 1)]
        return net


class Adam:
    """Adaptive moment optimizer over a flat list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(
                    f"non-finite gradient in parameter {i} "
                    f"(|g|_max={np.max(np.abs(g))}, step={self.step_count})")
        self.step_count += 1
        t = self.step_count
        scale = self.lr * np.sqrt(1.0 - self.beta2 ** t) / (1.0 - self.beta1 ** t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= scale * m / (np.sqrt(v) + self.eps)
