"""Minimal feed-forward stack: tanh MLPs, reverse-mode gradients, Adam.

Weight matrices are stored (fan_out, fan_in); forward evaluation is
H @ W.T + b so batches stay row-major.  Everything is float64: the rollout
gradient checks at 1e-4 relative tolerance do not survive single precision.

The solver trains stacks of networks (one per interior time step) whose
parameters live as views into one flat vector; the helpers here operate on
plain per-layer (W, b) lists so they work both for standalone Networks and
for slices of those stacks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng

__all__ = [
    "NetworkLayout",
    "Network",
    "OptimizerState",
    "NonFiniteGradientError",
    "init_network",
    "eval_network",
    "forward_layers",
    "backward_layers",
    "glorot_limits",
    "optimizer_step",
    "save_network",
    "load_network",
]


class NonFiniteGradientError(RuntimeError):
    """Raised by optimizer_step when a gradient entry is not finite."""


@dataclass(frozen=True)
class NetworkLayout:
    input_dim: int
    hidden_widths: tuple
    output_dim: int

    def __post_init__(self):
        widths = tuple(int(w) for w in self.hidden_widths)
        object.__setattr__(self, "hidden_widths", widths)
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "output_dim", int(self.output_dim))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input and output dimensions must be >= 1")
        if len(widths) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(w < 1 for w in widths):
            raise ValueError(f"hidden widths must be >= 1, got {widths}")

    @property
    def sizes(self) -> tuple:
        return (self.input_dim,) + self.hidden_widths + (self.output_dim,)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1


def default_layout(d: int) -> NetworkLayout:
    """Two hidden layers of width max(d + 10, 16), mapping R^d to R^d."""
    w = max(d + 10, 16)
    return NetworkLayout(input_dim=d, hidden_widths=(w, w), output_dim=d)


@dataclass
class Network:
    """Per-layer weights (fan_out, fan_in) and biases; tanh hidden, linear out."""

    layout: NetworkLayout
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.layout.sizes
        if len(self.weights) != self.layout.n_layers or len(self.biases) != self.layout.n_layers:
            raise ValueError("layer count does not match layout")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[k + 1], sizes[k]):
                raise ValueError(f"layer {k} weight shape {W.shape}, expected {(sizes[k + 1], sizes[k])}")
            if b.shape != (sizes[k + 1],):
                raise ValueError(f"layer {k} bias shape {b.shape}, expected {(sizes[k + 1],)}")


def glorot_limits(layout: NetworkLayout) -> list:
    return [np.sqrt(6.0 / (m + n)) for m, n in zip(layout.sizes[:-1], layout.sizes[1:])]


def init_network(layout: NetworkLayout, seed: int) -> Network:
    """Weights uniform on [-s, s] with s = sqrt(6/(fan_in+fan_out)); zero biases."""
    gen = rng.stream(int(seed))
    weights, biases = [], []
    for s, (fan_in, fan_out) in zip(glorot_limits(layout), zip(layout.sizes[:-1], layout.sizes[1:])):
        u = rng.uniforms(gen, (fan_out, fan_in))
        weights.append((2.0 * u - 1.0) * s)
        biases.append(np.zeros(fan_out))
    return Network(layout=layout, weights=weights, biases=biases)


def forward_layers(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                   x: np.ndarray, want_cache: bool = False):
    """Evaluate the MLP on a batch x of shape (M, input_dim).

    Returns (out, cache); cache holds the hidden activations needed by
    backward_layers (None when want_cache is false).
    """
    h = x
    hidden = []
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        # einsum keeps the reduction order independent of the batch size, so
        # a batch of M gives bit-identical rows to M single evaluations
        z = np.einsum("mi,oi->mo", h, W) + b
        if k < last:
            h = np.tanh(z)
            if want_cache:
                hidden.append(h)
        else:
            h = z
    return h, ((x, hidden) if want_cache else None)


def backward_layers(weights: Sequence[np.ndarray], cache, dout: np.ndarray):
    """Gradients of sum(out * dout) w.r.t. every weight and bias.

    cache comes from forward_layers(want_cache=True).  Input gradients are
    not needed by the rollout (path states are not trainable) and are not
    computed.
    """
    x, hidden = cache
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = dout
    for k in range(len(weights) - 1, -1, -1):
        below = hidden[k - 1] if k > 0 else x
        grads_w[k] = delta.T @ below
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weights[k]) * (1.0 - hidden[k - 1] ** 2)
    return grads_w, grads_b


def eval_network(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate on a single point (d,) or a batch (M, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.layout.input_dim:
        raise ValueError(f"input dimension {x.shape[1]}, expected {net.layout.input_dim}")
    out, _ = forward_layers(net.weights, net.biases, x)
    return out[0] if single else out


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators over one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: np.ndarray, lr: float = 5e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(m=np.zeros_like(params), v=np.zeros_like(params),
                   step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState):
    """One in-place Adam update; returns (params, state) for convenience."""
    if params.shape != grads.shape:
        raise ValueError(f"parameter shape {params.shape} != gradient shape {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError("non-finite gradient")
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * np.square(grads)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def save_network(net: Network, path: str) -> None:
    """Text checkpoint: first line layer sizes, then per layer each weight
    row and the bias, row-major, full round-trip precision."""
    with open(path, "w") as fh:
        fh.write(",".join(str(s) for s in net.layout.sizes) + "\n")
        for W, b in zip(net.weights, net.biases):
            for row in W:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
            fh.write(",".join(repr(float(v)) for v in b) + "\n")


def load_network(path: str) -> Network:
    with open(path) as fh:
        sizes = [int(tok) for tok in fh.readline().strip().split(",")]
        if len(sizes) < 3:
            raise ValueError(f"checkpoint {path} header has {len(sizes)} sizes, expected >= 3")
        layout = NetworkLayout(input_dim=sizes[0], hidden_widths=tuple(sizes[1:-1]),
                               output_dim=sizes[-1])
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = np.empty((fan_out, fan_in))
            for i in range(fan_out):
                W[i] = [float(tok) for tok in fh.readline().strip().split(",")]
            b = np.array([float(tok) for tok in fh.readline().strip().split(",")])
            weights.append(W)
            biases.append(b)
    return Network(layout=layout, weights=weights, biases=biases)
