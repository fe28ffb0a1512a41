"""Dual-encoder model: a shared nonlinear map feeding a deterministic head and
a stochastic (mean / log-std) head.

The deterministic output is the filtered signal used for alarms. The
stochastic output is a reparameterized Gaussian sample that soaks up the
measurement noise during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .numerics import Layer, ShapeError, NonFiniteError, init_layers, net_forward, net_predict

LOG_STD_MIN = -6.0
LOG_STD_MAX = 2.0


@dataclass
class ModelConfig:
    """Layer widths of the three sub-networks.

    The stochastic widths list the trunk followed by the output width; the
    last hidden width feeds two parallel projections (mean and log-std).
    """

    input_dim: int = 16
    shared_widths: tuple = (16, 100, 50)
    deterministic_widths: tuple = (50, 85, 16)
    stochastic_widths: tuple = (50, 65, 16)
    seed: int = 0

    def __post_init__(self):
        self.shared_widths = tuple(int(w) for w in self.shared_widths)
        self.deterministic_widths = tuple(int(w) for w in self.deterministic_widths)
        self.stochastic_widths = tuple(int(w) for w in self.stochastic_widths)
        self.validate()

    def validate(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if len(self.shared_widths) < 2 or self.shared_widths[0] != self.input_dim:
            raise ShapeError(f"shared_widths must start with input_dim={self.input_dim}, got {self.shared_widths}")
        latent = self.shared_widths[-1]
        for name, widths in (("deterministic_widths", self.deterministic_widths),
                             ("stochastic_widths", self.stochastic_widths)):
            if len(widths) < 2:
                raise ShapeError(f"{name} needs at least two entries, got {widths}")
            if widths[0] != latent:
                raise ShapeError(f"{name} must start with shared output width {latent}, got {widths}")
            if widths[-1] != self.input_dim:
                raise ShapeError(f"{name} must end with input_dim={self.input_dim}, got {widths}")
        if any(w < 1 for w in self.shared_widths + self.deterministic_widths + self.stochastic_widths):
            raise ShapeError("all widths must be positive")

    def to_dict(self):
        d = asdict(self)
        for k in ("shared_widths", "deterministic_widths", "stochastic_widths"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def for_dim(cls, dim, seed=0):
        """Default hidden widths with input and output widths set to ``dim``."""
        base = cls()
        return cls(input_dim=dim, shared_widths=(dim, *base.shared_widths[1:]),
                   deterministic_widths=(*base.deterministic_widths[:-1], dim),
                   stochastic_widths=(*base.stochastic_widths[:-1], dim), seed=seed)


@dataclass
class ModelParams:
    shared: list
    det_head: list
    stoch_trunk: list
    mean_head: Layer
    log_std_head: Layer

    def blocks(self):
        """Named views of every parameter array, in a fixed order.

        The arrays are the live storage, so in-place updates (Adam) mutate
        the model.
        """
        out = {}
        for prefix, layers in (("shared", self.shared), ("det_head", self.det_head),
                               ("stoch_trunk", self.stoch_trunk),
                               ("mean_head", [self.mean_head]),
                               ("log_std_head", [self.log_std_head])):
            for k, layer in enumerate(layers):
                out[f"{prefix}.{k}.weights"] = layer.weights
                out[f"{prefix}.{k}.bias"] = layer.bias
        return out

    def n_parameters(self):
        return int(sum(a.size for a in self.blocks().values()))

    def copy(self):
        def dup(layers):
            return [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in layers]

        return ModelParams(dup(self.shared), dup(self.det_head), dup(self.stoch_trunk),
                           dup([self.mean_head])[0], dup([self.log_std_head])[0])

    def zero_(self):
        for a in self.blocks().values():
            a[...] = 0.0
        return self


def init_params(config: ModelConfig) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    # tanh at the shared output: it is the "nonlinear mapping" both heads read
    shared = init_layers(config.shared_widths, rng, final_activation="tanh")
    det_head = init_layers(config.deterministic_widths, rng, final_activation="identity")
    sw = config.stochastic_widths
    if len(sw) > 2:
        stoch_trunk = init_layers(sw[:-1], rng, final_activation="tanh")
    else:
        stoch_trunk = []
    mean_head, log_std_head = (init_layers(sw[-2:], rng, final_activation="identity")[0]
                               for _ in range(2))
    return ModelParams(shared, det_head, stoch_trunk, mean_head, log_std_head)


def _check_width(params, y):
    d = params.shared[0].n_in
    if np.shape(y)[-1] != d:
        raise ShapeError(f"expected measurements of width {d}, got {np.shape(y)[-1]}")


def encode_deterministic(params: ModelParams, y):
    """Deterministic representation of ``y`` (vector or batch of rows)."""
    _check_width(params, y)
    y = np.asarray(y, dtype=np.float64)
    return net_predict(params.det_head, net_predict(params.shared, y))


def _stochastic_parts(params, h):
    z = net_predict(params.stoch_trunk, h) if params.stoch_trunk else h
    mu = z @ params.mean_head.weights.T + params.mean_head.bias
    log_std = z @ params.log_std_head.weights.T + params.log_std_head.bias
    return mu, np.exp(np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))


def encode_stochastic(params: ModelParams, y, noise):
    """Returns ``(mu_s, sigma_s, phi_s)`` with ``phi_s = mu_s + noise * sigma_s``."""
    _check_width(params, y)
    y = np.asarray(y, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != y.shape:
        raise ShapeError(f"noise shape {noise.shape} != measurement shape {y.shape}")
    mu, sigma = _stochastic_parts(params, net_predict(params.shared, y))
    return mu, sigma, mu + noise * sigma


@dataclass
class EncodedBatch:
    phi_d: np.ndarray
    mu_s: np.ndarray
    sigma_s: np.ndarray
    noise: np.ndarray
    phi_s: np.ndarray
    y_hat: np.ndarray
    log_std_raw: np.ndarray = None
    # forward traces for backprop; empty when not requested
    traces: dict = field(default_factory=dict, repr=False)


def forward_batch(params: ModelParams, batch, noise, keep_trace=False) -> EncodedBatch:
    """Full forward pass over a (time-ordered) batch of rows."""
    batch = np.asarray(batch, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if batch.ndim != 2:
        raise ShapeError(f"batch must be 2-D (rows x dims), got shape {batch.shape}")
    _check_width(params, batch)
    if noise.shape != batch.shape:
        raise ShapeError(f"noise shape {noise.shape} != batch shape {batch.shape}")

    h, tr_shared = net_forward(params.shared, batch)
    phi_d, tr_det = net_forward(params.det_head, h)
    if params.stoch_trunk:
        z, tr_trunk = net_forward(params.stoch_trunk, h)
    else:
        z, tr_trunk = h, None
    mu, tr_mu = net_forward([params.mean_head], z)
    log_std_raw, tr_ls = net_forward([params.log_std_head], z)
    sigma = np.exp(np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX))
    phi_s = mu + noise * sigma
    y_hat = phi_d + phi_s
    if not (np.all(np.isfinite(phi_d)) and np.all(np.isfinite(phi_s))):
        raise NonFiniteError("non-finite activations in forward pass")

    traces = {}
    if keep_trace:
        traces = dict(shared=tr_shared, det=tr_det, trunk=tr_trunk, mean=tr_mu, log_std=tr_ls)
    return EncodedBatch(phi_d, mu, sigma, noise, phi_s, y_hat, log_std_raw, traces)
