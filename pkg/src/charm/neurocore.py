"""Minimal differentiable numeric core.

Dense layers, leaky-ReLU, softmax / weighted cross-entropy, inverted
dropout, reverse-mode gradients for feed-forward stacks, and Adam.
Everything is float64 and driven by an explicit seeded generator so a
fixed seed gives bit-identical parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_STD = 1e-8


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; same seed -> same stream on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def leaky_relu(x, slope: float = 0.01):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(pre, slope: float = 0.01):
    """Derivative w.r.t. the pre-activation."""
    return np.where(np.asarray(pre) >= 0.0, 1.0, slope)


def softmax(logits):
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax: non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise ValueError("log_softmax: non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def weighted_cross_entropy(logits, target: int, class_weights) -> float:
    """-w[target] * log p[target], computed in log-space."""
    logits = np.asarray(logits, dtype=float)
    class_weights = np.asarray(class_weights, dtype=float)
    m = logits.shape[-1]
    if not (0 <= target < m):
        raise ValueError(f"target {target} out of range for {m} classes")
    if class_weights.shape != (m,) or np.any(class_weights <= 0):
        raise ValueError("class_weights must be positive, one per class")
    return float(-class_weights[target] * log_softmax(logits)[target])


def softmax_ce_grad(logits, target: int, weight: float):
    """Gradient of weighted_cross_entropy w.r.t. the logits."""
    g = softmax(logits).copy()
    g[target] -= 1.0
    return weight * g


def dropout_mask(shape, p: float, rng: np.random.Generator):
    """Inverted-dropout mask: zeros with probability p, survivors 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} not in [0, 1)")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def dropout(x, p: float, rng: np.random.Generator | None = None,
            training: bool = False):
    """Inverted dropout; identity at inference time."""
    x = np.asarray(x, dtype=float)
    if not training or p == 0.0:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability {p} not in [0, 1)")
        return x
    return x * dropout_mask(x.shape, p, rng)


@dataclass
class Dense:
    """Affine map y = W x + b with W of shape [out, in]."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.w.ndim != 2 or min(self.w.shape) < 1:
            raise ValueError(f"bad weight shape {self.w.shape}")
        if self.b.shape != (self.w.shape[0],):
            raise ValueError(f"bias shape {self.b.shape} != ({self.w.shape[0]},)")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite layer parameters")

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input dim {x.shape[-1]} != layer in_dim {self.in_dim}")
        return x @ self.w.T + self.b


def init_dense(out_dim: int, in_dim: int, rng: np.random.Generator) -> Dense:
    """Glorot-uniform weights in +-sqrt(6/(in+out)), zero biases."""
    if out_dim < 1 or in_dim < 1:
        raise ValueError(f"bad layer dims ({out_dim}, {in_dim})")
    lim = np.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(-lim, lim, size=(out_dim, in_dim))
    return Dense(w, np.zeros(out_dim))


@dataclass
class Stack:
    """Feed-forward stack: dense -> leaky -> dropout repeated, last layer
    optionally activated and never followed by dropout."""

    layers: list
    slope: float = 0.01
    dropout_p: float = 0.05
    final_activation: bool = False

    @classmethod
    def init(cls, dims, rng, slope=0.01, dropout_p=0.05, final_activation=False):
        layers = [init_dense(dims[i + 1], dims[i], rng) for i in range(len(dims) - 1)]
        return cls(layers, slope=slope, dropout_p=dropout_p,
                   final_activation=final_activation)

    def param_arrays(self):
        out = []
        for layer in self.layers:
            out.extend([layer.w, layer.b])
        return out

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """x: [batch, in_dim]. Returns (output, cache) where cache feeds backward()."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"expected [batch, dim] input, got shape {x.shape}")
        cache = []
        for i, layer in enumerate(self.layers):
            last = i == len(self.layers) - 1
            pre = layer(x)
            activated = (not last) or self.final_activation
            a = leaky_relu(pre, self.slope) if activated else pre
            mask = None
            if training and not last and self.dropout_p > 0.0:
                mask = dropout_mask(a.shape, self.dropout_p, rng)
                a = a * mask
            cache.append((x, pre, mask, activated))
            x = a
        return x, cache

    def backward(self, cache, d_out):
        """Gradients of a scalar loss given d_loss/d_output.

        Returns (grads aligned with param_arrays(), d_loss/d_input).
        """
        d = np.asarray(d_out, dtype=float)
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            x_in, pre, mask, activated = cache[i]
            if mask is not None:
                d = d * mask
            if activated:
                d = d * leaky_relu_grad(pre, self.slope)
            grads[2 * i] = d.T @ x_in
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.layers[i].w
        return grads, d


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0 or eps <= 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1):
            raise ValueError("bad Adam hyperparameters")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._shapes = [p.shape for p in params]
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if len(params) != len(self._shapes):
            raise ValueError("parameter list length changed")
        for p, g, shape in zip(params, grads, self._shapes):
            if p.shape != shape or g.shape != shape:
                raise ValueError(f"shape mismatch: {p.shape} vs {g.shape} vs {shape}")
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
