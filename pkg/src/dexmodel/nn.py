"""Small dense-network engine: forward pass, analytic backprop and Adam.

Everything is plain numpy in float64. Networks standardize their inputs and
outputs with per-dimension statistics, so the public ``forward`` works in the
caller's units and ``backward`` returns gradients in those same units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
STD_FLOOR = 1e-8

_ACTIVATIONS = ("tanh", "relu")


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    def __post_init__(self):
        sizes = [int(n) for n in self.layer_sizes]
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ShapeError(f"bad layer sizes {sizes}")
        self.layer_sizes = sizes
        n_layers = len(sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError("one weight matrix and bias per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected W{(sizes[i], sizes[i + 1])}, "
                    f"b({sizes[i + 1]},), got W{w.shape}, b{b.shape}"
                )
        if len(self.activations) != n_layers - 1:
            raise ShapeError("one activation tag per hidden layer required")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.in_mean = np.asarray(self.in_mean, dtype=float).reshape(sizes[0])
        self.out_mean = np.asarray(self.out_mean, dtype=float).reshape(sizes[-1])
        self.in_std = np.maximum(np.asarray(self.in_std, dtype=float).reshape(sizes[0]), STD_FLOOR)
        self.out_std = np.maximum(np.asarray(self.out_std, dtype=float).reshape(sizes[-1]), STD_FLOOR)

    @classmethod
    def create(cls, layer_sizes, seed=0, activation="tanh"):
        """Fresh network with uniform(+-1/sqrt(fan_in)) weights and identity normalization."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        if isinstance(activation, str):
            activation = [activation] * (len(layer_sizes) - 2)
        return cls(
            layer_sizes=list(layer_sizes),
            weights=weights,
            biases=biases,
            activations=list(activation),
            in_mean=np.zeros(layer_sizes[0]),
            in_std=np.ones(layer_sizes[0]),
            out_mean=np.zeros(layer_sizes[-1]),
            out_std=np.ones(layer_sizes[-1]),
        )

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]

    def fit_normalization(self, inputs, outputs):
        inputs = np.asarray(inputs, dtype=float).reshape(-1, self.in_dim)
        outputs = np.asarray(outputs, dtype=float).reshape(-1, self.out_dim)
        self.in_mean = inputs.mean(axis=0)
        self.in_std = np.maximum(inputs.std(axis=0), STD_FLOOR)
        self.out_mean = outputs.mean(axis=0)
        self.out_std = np.maximum(outputs.std(axis=0), STD_FLOOR)

    def standardize(self, x):
        return (x - self.in_mean) / self.in_std

    def destandardize(self, y_n):
        return y_n * self.out_std + self.out_mean

    # -- evaluation -------------------------------------------------------

    def _prepare(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"input has {x.shape[-1]} features, network expects {self.in_dim}")
        return x

    def forward(self, x):
        """Evaluate on a vector or on any batch whose last axis is the input."""
        x = self._prepare(x)
        lead = x.shape[:-1]
        h = self.standardize(x.reshape(-1, self.in_dim))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h) if self.activations[i] == "tanh" else np.maximum(h, 0.0)
        return self.destandardize(h).reshape(*lead, self.out_dim)

    __call__ = forward

    def forward_cached(self, x):
        """Batch forward that keeps what ``backward`` needs. ``x`` is (N, in_dim)."""
        x = self._prepare(x)
        if x.ndim != 2:
            raise ShapeError("forward_cached expects a 2-D batch")
        acts = [self.standardize(x)]
        h = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h) if self.activations[i] == "tanh" else np.maximum(h, 0.0)
                acts.append(h)
        return self.destandardize(h), acts

    def backward(self, cache, d_out):
        """Backprop ``d_out`` (dLoss/dOutput, caller units) through a cached pass.

        Returns ``(grads, d_in)`` where ``grads`` is ``[dW0, db0, dW1, db1, ...]``.
        """
        acts = cache
        g = d_out * self.out_std
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                if self.activations[i - 1] == "tanh":
                    g = g * (1.0 - a_in * a_in)
                else:
                    g = g * (a_in > 0.0)
        return grads, g / self.in_std

    # -- parameters -------------------------------------------------------

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_params(self):
        return sum(p.size for p in self.params())

    def param_vector(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_param_vector(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.num_params():
            raise ShapeError(f"expected {self.num_params()} parameters, got {vec.size}")
        pos = 0
        for p in self.params():
            p[...] = vec[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self):
        return DenseNet(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=list(self.activations),
            in_mean=self.in_mean.copy(),
            in_std=self.in_std.copy(),
            out_mean=self.out_mean.copy(),
            out_std=self.out_std.copy(),
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "in_mean": self.in_mean.tolist(),
            "in_std": self.in_std.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_std": self.out_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"network format version {version} != {FORMAT_VERSION}")
        sizes = d["layer_sizes"]
        weights = [
            np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1])
            for i, w in enumerate(d["weights"])
        ]
        return cls(
            layer_sizes=sizes,
            weights=weights,
            biases=[np.asarray(b, dtype=float) for b in d["biases"]],
            activations=d["activations"],
            in_mean=np.asarray(d["in_mean"]),
            in_std=np.asarray(d["in_std"]),
            out_mean=np.asarray(d["out_mean"]),
            out_std=np.asarray(d["out_std"]),
        )


def net_gradients(net, inputs, targets, loss="squared"):
    """Mean-over-batch loss and its gradient with respect to every parameter.

    The per-sample loss sums over output dimensions: ``||y - t||^2`` for
    ``"squared"`` and ``|y - t|_1`` for ``"absolute"`` (subgradient 0 at ties).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape[0] == 0:
        raise ShapeError("empty batch")
    if targets.shape != (inputs.shape[0], net.out_dim):
        raise ShapeError(f"targets shaped {targets.shape}, expected {(inputs.shape[0], net.out_dim)}")
    _check_finite("inputs", inputs)
    _check_finite("targets", targets)
    n = inputs.shape[0]
    y, cache = net.forward_cached(inputs)
    err = y - targets
    if loss == "squared":
        value = float(np.sum(err * err) / n)
        d_out = 2.0 * err / n
    elif loss == "absolute":
        value = float(np.sum(np.abs(err)) / n)
        d_out = np.sign(err) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grads, _ = net.backward(cache, d_out)
    return grads, value


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-4, **kw):
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(state, params, grads):
    """In-place bias-corrected Adam update; returns ``params`` for chaining."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state disagree in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params

