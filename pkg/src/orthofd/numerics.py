"""Dense feed-forward networks with exact reverse-mode gradients, and Adam.

Networks are plain lists of :class:`Layer`. Every function accepts either a
single vector ``(in,)`` or a batch ``(batch, in)``; batches are what the
training loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "identity")


class ShapeError(ValueError):
    """Raised when array shapes do not chain through a network."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up where it must not."""


@dataclass
class Layer:
    """One affine map followed by an elementwise activation.

    ``weights`` is stored (out, in) so ``h = f(W @ x + b)`` reads naturally.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weights rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class ForwardTrace:
    """Activations kept for the backward pass.

    ``activations[0]`` is the input; ``activations[k]`` is the output of layer k.
    ``pre_activations[k]`` is the affine output of layer k (before f).
    """

    activations: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)


def init_layers(widths, rng: np.random.Generator, final_activation="identity"):
    """Glorot-uniform weights, zero biases; tanh everywhere except the last layer."""
    widths = list(widths)
    if len(widths) < 2:
        raise ShapeError(f"need at least two widths to build a layer, got {widths}")
    layers = []
    for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
        act = final_activation if k == len(widths) - 2 else "tanh"
        layers.append(Layer(w, np.zeros(n_out), act))
    return layers


def _activate(z, activation):
    if activation == "tanh":
        return np.tanh(z)
    return z


def net_forward(layers, x):
    """Run ``x`` through ``layers``; returns ``(output, trace)``."""
    h = np.asarray(x, dtype=np.float64)
    trace = ForwardTrace(activations=[h])
    for k, layer in enumerate(layers):
        if h.shape[-1] != layer.n_in:
            raise ShapeError(
                f"layer {k} expects input width {layer.n_in}, got {h.shape[-1]}"
            )
        z = h @ layer.weights.T + layer.bias
        h = _activate(z, layer.activation)
        trace.pre_activations.append(z)
        trace.activations.append(h)
    return h, trace


def net_predict(layers, x):
    """Forward pass without keeping a trace (inference path)."""
    h = x
    for layer in layers:
        h = h @ layer.weights.T + layer.bias
        if layer.activation == "tanh":
            h = np.tanh(h)
    return h


def net_backward(layers, trace: ForwardTrace, output_gradient):
    """Backpropagate ``output_gradient`` through a traced forward pass.

    Returns ``(param_gradients, input_gradient)`` where ``param_gradients`` is a
    list of ``(dW, db)`` pairs aligned with ``layers``.
    """
    if len(trace.activations) != len(layers) + 1:
        raise ShapeError(
            f"trace holds {len(trace.activations)} activations, network needs {len(layers) + 1}"
        )
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != trace.activations[-1].shape:
        raise ShapeError(
            f"output gradient shape {g.shape} does not match network output {trace.activations[-1].shape}"
        )
    grads = [None] * len(layers)
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        h_in = trace.activations[k]
        if h_in.shape[-1] != layer.n_in:
            raise ShapeError(f"stale trace: layer {k} input width changed")
        if layer.activation == "tanh":
            out = trace.activations[k + 1]
            g = g * (1.0 - out * out)
        if g.ndim == 1:
            dW = np.outer(g, h_in)
            db = g.copy()
        else:
            dW = g.T @ h_in
            db = g.sum(axis=0)
        grads[k] = (dW, db)
        g = g @ layer.weights
    return grads, g


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, gradients: dict):
    """Bias-corrected Adam update, applied in place to ``params``.

    ``params`` and ``gradients`` map block names to arrays. Returns
    ``(params, state)`` for convenience.
    """
    for name, g in gradients.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter block {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in parameter block {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in gradients.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def finite_difference_gradient(loss_fn, params: dict, step=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. every scalar in ``params``.

    ``loss_fn`` takes no arguments and reads the (temporarily perturbed) arrays
    in ``params``; each entry is restored after probing.
    """
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def max_relative_error(a, b, floor=1e-8):
    """Inf-norm relative error ``max|a-b| / max(max|a|, max|b|, floor)``.

    Entrywise ratios blow up on entries that are zero up to round-off, so the
    error is scaled by the largest magnitude in the block instead.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / scale)


def gradient_relative_error(grads_a: dict, grads_b: dict, floor=1e-8):
    """:func:`max_relative_error` over all blocks flattened into one vector."""
    keys = sorted(grads_a)
    if sorted(grads_b) != keys:
        raise KeyError("gradient dictionaries cover different parameter blocks")
    flat_a = np.concatenate([np.ravel(grads_a[k]) for k in keys])
    flat_b = np.concatenate([np.ravel(grads_b[k]) for k in keys])
    return max_relative_error(flat_a, flat_b, floor)
