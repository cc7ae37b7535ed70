"""Minimal dense network kernel with hand-written backprop.

Just what the actor/critic pair needs: fully connected layers with leaky-ReLU
/ ReLU / linear activations, one optional batch-normalization layer,
He-initialized weights, plain SGD and global gradient-norm clipping. Forward
in train mode returns the caches backward needs; backward returns both the
per-parameter gradients and the gradient with respect to the input batch
(the critic's action-input gradient drives the actor update).

Gradients are plain nested lists of arrays mirroring the parameter
structure, so clipping, reporting and SGD are small generic helpers.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01
BN_MOMENTUM = 0.99
BN_EPS = 1e-5


class StaleCacheError(RuntimeError):
    """Backward called with caches that do not match the layer stack."""


def he_init(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Weights ~ Normal(0, sqrt(2 / fan_in)); fan_in is the first axis."""
    fan_in = shape[0]
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Dense:
    """Affine map plus activation: out = act(x @ W + b)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "linear",
                 rng: np.random.Generator | None = None):
        if activation not in ("linear", "relu", "leaky_relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        if rng is None:
            self.W = np.zeros((n_in, n_out))
        else:
            self.W = he_init((n_in, n_out), rng)
        self.b = np.zeros(n_out)

    def spec(self) -> dict:
        return {"kind": "dense", "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def state(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray, train: bool):
        z = x @ self.W + self.b
        if self.activation == "relu":
            out = np.maximum(z, 0.0)
        elif self.activation == "leaky_relu":
            out = np.where(z > 0, z, LEAKY_SLOPE * z)
        else:
            out = z
        cache = (x, z) if train else None
        return out, cache

    def backward(self, cache, grad_out: np.ndarray):
        if cache is None or cache[0].shape[1] != self.n_in:
            raise StaleCacheError("dense cache does not match layer")
        x, z = cache
        if self.activation == "relu":
            dz = grad_out * (z > 0)
        elif self.activation == "leaky_relu":
            dz = grad_out * np.where(z > 0, 1.0, LEAKY_SLOPE)
        else:
            dz = grad_out
        dW = x.T @ dz
        db = dz.sum(axis=0)
        dx = dz @ self.W.T
        return dx, [dW, db]


class BatchNorm:
    """Per-feature normalization: batch statistics while training, running
    statistics (a fixed affine map) in eval mode."""

    def __init__(self, n_features: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.n = n_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(n_features)
        self.beta = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)

    def spec(self) -> dict:
        return {"kind": "batch_norm", "n": self.n, "momentum": self.momentum,
                "eps": self.eps}

    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]

    def state(self) -> list[np.ndarray]:
        return [self.gamma, self.beta, self.running_mean, self.running_var]

    def forward(self, x: np.ndarray, train: bool):
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv_std
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            out = self.gamma * xhat + self.beta
            return out, (xhat, inv_std)
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        out = self.gamma * (x - self.running_mean) * inv_std + self.beta
        return out, None

    def backward(self, cache, grad_out: np.ndarray):
        if cache is None or cache[0].shape[1] != self.n:
            raise StaleCacheError("batch-norm cache does not match layer")
        xhat, inv_std = cache
        m = xhat.shape[0]
        dgamma = (grad_out * xhat).sum(axis=0)
        dbeta = grad_out.sum(axis=0)
        dxhat = grad_out * self.gamma
        dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, [dgamma, dbeta]


class Mlp:
    """Ordered stack of Dense / BatchNorm layers."""

    def __init__(self, layers: list):
        self.layers = list(layers)

    @property
    def n_in(self) -> int:
        for l in self.layers:
            if isinstance(l, Dense):
                return l.n_in
        raise ValueError("no dense layer")

    def params(self) -> list[list[np.ndarray]]:
        return [l.params() for l in self.layers]

    def state(self) -> list[list[np.ndarray]]:
        return [l.state() for l in self.layers]

    def copy(self) -> "Mlp":
        other = mlp_from_spec([l.spec() for l in self.layers])
        for dst, src in zip(other.state(), self.state()):
            for d, s in zip(dst, src):
                d[...] = s
        return other


def mlp_from_spec(specs: list[dict]) -> Mlp:
    layers = []
    for s in specs:
        if s["kind"] == "dense":
            layers.append(Dense(s["n_in"], s["n_out"], s["activation"]))
        elif s["kind"] == "batch_norm":
            layers.append(BatchNorm(s["n"], s["momentum"], s["eps"]))
        else:
            raise ValueError(f"unknown layer kind {s['kind']!r}")
    return Mlp(layers)


def forward(net: Mlp, x: np.ndarray, train: bool = False):
    """Apply the stack. Train mode returns (output, caches) for backward;
    eval mode returns the output alone."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ValueError(f"expected input of width {net.n_in}, got shape {x.shape}")
    caches = [] if train else None
    for layer in net.layers:
        x, cache = layer.forward(x, train)
        if train:
            caches.append(cache)
    return (x, caches) if train else x


def backward(net: Mlp, caches: list, grad_out: np.ndarray):
    """Backpropagate a loss gradient through the stack.

    Returns (grads, input_grad): grads mirrors net.params(), input_grad is
    the gradient with respect to the input batch.
    """
    if caches is None or len(caches) != len(net.layers):
        raise StaleCacheError("cache list does not match layer stack")
    g = np.asarray(grad_out, dtype=np.float64)
    grads: list[list[np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        g, layer_grads = net.layers[i].backward(caches[i], g)
        grads[i] = layer_grads
    return grads, g


@dataclass
class GradReport:
    global_norm: float
    layer_norms: list[float]


def grad_report(grads: list[list[np.ndarray]]) -> GradReport:
    layer_norms = [float(np.sqrt(sum(float((g * g).sum()) for g in lg))) for lg in grads]
    return GradReport(float(np.sqrt(sum(n * n for n in layer_norms))), layer_norms)


def clip_grad_norm(grads: list[list[np.ndarray]], max_norm: float):
    """Scale all gradients so the global L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be > 0")
    total = grad_report(grads).global_norm
    if total > max_norm:
        scale = max_norm / total
        grads = [[g * scale for g in lg] for lg in grads]
    return grads


def sgd_step(net: Mlp, grads: list[list[np.ndarray]], lr: float) -> None:
    """Plain gradient descent: theta <- theta - lr * grad, in place."""
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    for layer_params, layer_grads in zip(net.params(), grads):
        for p, g in zip(layer_params, layer_grads):
            p -= lr * g


def save_checkpoint(net: Mlp, path: str) -> None:
    """Binary dump of layer specs and all state arrays; round-trips exactly."""
    arrays = {}
    for i, layer in enumerate(net.layers):
        for j, arr in enumerate(layer.state()):
            arrays[f"l{i}_{j}"] = arr
    meta = json.dumps({"version": 1, "layers": [l.spec() for l in net.layers]})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> Mlp:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != 1:
            raise ValueError("unsupported checkpoint version")
        net = mlp_from_spec(meta["layers"])
        for i, layer in enumerate(net.layers):
            for j, arr in enumerate(layer.state()):
                arr[...] = data[f"l{i}_{j}"]
    return net
