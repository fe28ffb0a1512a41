"""Training objective: orthogonality + Gaussian NLL + smoothness + KL.

Every term is a batch mean (per sample, or per transition for smoothness),
so magnitudes do not depend on window length. Each ``*_term`` function has a
``*_grad`` sibling returning the gradient with respect to its array inputs;
:func:`total_loss_gradients` chains these through the model's backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .model import LOG_STD_MAX, LOG_STD_MIN, ModelParams, forward_batch
from .numerics import NonFiniteError, net_backward

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
ORTH_EPS = 1e-12
TERMS = ("orthogonality", "nll", "smoothness", "kl")


@dataclass
class LossWeights:
    orthogonality: float = 1.0
    nll: float = 1.0
    smoothness: float = 1.0
    kl: float = 1.0
    # "cosine" (squared cosine, bounded) or "dot" (raw dot product, ablation only)
    orthogonality_form: str = "cosine"
    # which stochastic vector is compared with phi_d: "sampled" or "mean"
    orthogonality_source: str = "sampled"

    def __post_init__(self):
        for name in TERMS:
            w = float(getattr(self, name))
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {w}")
            setattr(self, name, w)
        if self.orthogonality_form not in ("cosine", "dot"):
            raise ValueError(f"unknown orthogonality_form {self.orthogonality_form!r}")
        if self.orthogonality_source not in ("sampled", "mean"):
            raise ValueError(f"unknown orthogonality_source {self.orthogonality_source!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    orthogonality: float
    nll: float
    smoothness: float
    kl: float
    total: float

    def to_dict(self):
        return asdict(self)


def _check_sigma(sigma):
    if np.any(~(sigma > 0)):
        raise ValueError("sigma_s must be strictly positive")


def _rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def nll_term(y, phi_d, mu_s, sigma_s):
    y, phi_d, mu_s, sigma_s = map(_rows, (y, phi_d, mu_s, sigma_s))
    _check_sigma(sigma_s)
    r = y - phi_d - mu_s
    per_row = np.sum(r * r / (2.0 * sigma_s**2) + np.log(sigma_s) + HALF_LOG_2PI, axis=1)
    return float(per_row.mean())


def nll_grad(y, phi_d, mu_s, sigma_s):
    """Gradients w.r.t. ``(phi_d, mu_s, log sigma_s)``."""
    y, phi_d, mu_s, sigma_s = map(_rows, (y, phi_d, mu_s, sigma_s))
    n = y.shape[0]
    r = y - phi_d - mu_s
    inv_var = 1.0 / sigma_s**2
    g_mean = -r * inv_var / n
    g_log_std = (1.0 - r * r * inv_var) / n
    return g_mean, g_mean.copy(), g_log_std


def smoothness_term(phi_d):
    phi_d = _rows(phi_d)
    if phi_d.shape[0] < 2:
        return 0.0
    d = np.diff(phi_d, axis=0)
    return float(np.sum(d * d) / (phi_d.shape[0] - 1))


def smoothness_grad(phi_d):
    phi_d = _rows(phi_d)
    g = np.zeros_like(phi_d)
    t = phi_d.shape[0]
    if t < 2:
        return g
    d = np.diff(phi_d, axis=0) * (2.0 / (t - 1))
    g[1:] += d
    g[:-1] -= d
    return g


def kl_term(mu_s, sigma_s):
    mu_s, sigma_s = _rows(mu_s), _rows(sigma_s)
    _check_sigma(sigma_s)
    per_row = 0.5 * np.sum(mu_s**2 + sigma_s**2 - 1.0 - 2.0 * np.log(sigma_s), axis=1)
    return float(per_row.mean())


def kl_grad(mu_s, sigma_s):
    """Gradients w.r.t. ``(mu_s, log sigma_s)``."""
    mu_s, sigma_s = _rows(mu_s), _rows(sigma_s)
    n = mu_s.shape[0]
    return mu_s / n, (sigma_s**2 - 1.0) / n


def orthogonality_term(phi_d, phi_s, form="cosine"):
    a, b = _rows(phi_d), _rows(phi_s)
    p = np.sum(a * b, axis=1)
    if form == "dot":
        return float(p.mean())
    na = np.sum(a * a, axis=1) + ORTH_EPS
    nb = np.sum(b * b, axis=1) + ORTH_EPS
    return float(np.mean(p * p / (na * nb)))


def orthogonality_grad(phi_d, phi_s, form="cosine"):
    """Gradients w.r.t. ``(phi_d, phi_s)``."""
    a, b = _rows(phi_d), _rows(phi_s)
    n = a.shape[0]
    if form == "dot":
        return b / n, a / n
    p = np.sum(a * b, axis=1, keepdims=True)
    na = np.sum(a * a, axis=1, keepdims=True) + ORTH_EPS
    nb = np.sum(b * b, axis=1, keepdims=True) + ORTH_EPS
    c = p * p / (na * nb)
    ga = (2.0 * p * b / (na * nb) - 2.0 * c * a / na) / n
    gb = (2.0 * p * a / (na * nb) - 2.0 * c * b / nb) / n
    return ga, gb


def _orth_partner(encoded, weights):
    return encoded.mu_s if weights.orthogonality_source == "mean" else encoded.phi_s


def total_loss(encoded, y_batch, weights: LossWeights) -> LossBreakdown:
    terms = dict(
        orthogonality=orthogonality_term(encoded.phi_d, _orth_partner(encoded, weights),
                                         weights.orthogonality_form),
        nll=nll_term(y_batch, encoded.phi_d, encoded.mu_s, encoded.sigma_s),
        smoothness=smoothness_term(encoded.phi_d),
        kl=kl_term(encoded.mu_s, encoded.sigma_s),
    )
    total = sum(getattr(weights, k) * v for k, v in terms.items())
    return LossBreakdown(total=float(total), **terms)


def _encoder_output_grads(encoded, y_batch, weights):
    """dL/d(phi_d, mu_s, log_std) for the weighted total, per term."""
    g_phi_d = np.zeros_like(encoded.phi_d)
    g_mu = np.zeros_like(encoded.mu_s)
    g_ls = np.zeros_like(encoded.mu_s)
    per_term = {}

    if weights.orthogonality:
        ga, gb = orthogonality_grad(encoded.phi_d, _orth_partner(encoded, weights),
                                    weights.orthogonality_form)
        w = weights.orthogonality
        g_phi_d += w * ga
        g_mu += w * gb
        if weights.orthogonality_source == "sampled":
            # phi_s = mu + e * exp(log_std)
            g_ls += w * gb * encoded.noise * encoded.sigma_s
        per_term["orthogonality"] = (ga, gb)
    if weights.nll:
        gd, gm, gl = nll_grad(y_batch, encoded.phi_d, encoded.mu_s, encoded.sigma_s)
        g_phi_d += weights.nll * gd
        g_mu += weights.nll * gm
        g_ls += weights.nll * gl
        per_term["nll"] = gd
    if weights.smoothness:
        gs = smoothness_grad(encoded.phi_d)
        g_phi_d += weights.smoothness * gs
        per_term["smoothness"] = gs
    if weights.kl:
        gm, gl = kl_grad(encoded.mu_s, encoded.sigma_s)
        g_mu += weights.kl * gm
        g_ls += weights.kl * gl
        per_term["kl"] = gm

    for name, g in per_term.items():
        arrs = g if isinstance(g, tuple) else (g,)
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise NonFiniteError(f"non-finite gradient from the {name} term")
    return g_phi_d, g_mu, g_ls


def backward_from_outputs(params: ModelParams, encoded, g_phi_d, g_mu, g_log_std):
    """Chain encoder-output gradients into gradients for every parameter block."""
    tr = encoded.traces
    if not tr:
        raise ValueError("encoded batch carries no traces; call forward_batch(keep_trace=True)")
    # clamped log-std entries have zero derivative
    raw = encoded.log_std_raw
    g_log_std = g_log_std * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))

    grads = {}

    def store(prefix, layer_grads):
        for k, (dW, db) in enumerate(layer_grads):
            grads[f"{prefix}.{k}.weights"] = dW
            grads[f"{prefix}.{k}.bias"] = db

    gl_mean, gz = net_backward([params.mean_head], tr["mean"], g_mu)
    store("mean_head", gl_mean)
    gl_ls, gz2 = net_backward([params.log_std_head], tr["log_std"], g_log_std)
    store("log_std_head", gl_ls)
    gz = gz + gz2
    if params.stoch_trunk:
        gl_trunk, gh = net_backward(params.stoch_trunk, tr["trunk"], gz)
        store("stoch_trunk", gl_trunk)
    else:
        gh = gz
    gl_det, gh2 = net_backward(params.det_head, tr["det"], g_phi_d)
    store("det_head", gl_det)
    gl_shared, _ = net_backward(params.shared, tr["shared"], gh + gh2)
    store("shared", gl_shared)

    order = params.blocks().keys()
    return {k: grads[k] for k in order}


def total_loss_gradients(params: ModelParams, y_batch, noise, weights: LossWeights):
    """Exact gradient of the weighted total w.r.t. every parameter, noise held fixed.

    Returns ``(grads, breakdown)``; ``grads`` is keyed like ``params.blocks()``.
    """
    encoded = forward_batch(params, y_batch, noise, keep_trace=True)
    breakdown = total_loss(encoded, y_batch, weights)
    if not np.isfinite(breakdown.total):
        bad = [k for k in TERMS if not np.isfinite(getattr(breakdown, k))]
        raise NonFiniteError(f"non-finite loss in term(s) {bad}")
    g_phi_d, g_mu, g_ls = _encoder_output_grads(encoded, np.asarray(y_batch, dtype=np.float64), weights)
    grads = backward_from_outputs(params, encoded, g_phi_d, g_mu, g_ls)
    return grads, breakdown
