"""Seeded training loop, grid search and JSON checkpoints."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import zlib
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .data import DataError, TimeSeriesDataset
from .loss import TERMS, LossBreakdown, LossWeights, total_loss, total_loss_gradients
from .model import ModelConfig, ModelParams, forward_batch, init_params
from .numerics import AdamState, NonFiniteError, ShapeError, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 200
    window_length: int = 64
    learning_rate: float = 1e-3
    weights: LossWeights = field(default_factory=LossWeights)
    validation_fraction: float = 0.2
    seed: int = 0
    mc_samples: int = 1
    # early stopping on the validation total
    patience: int = 20
    min_delta: float = 1e-5

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2 (smoothness needs a transition)")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.epochs < 0 or self.mc_samples < 1:
            raise ValueError("epochs must be >= 0 and mc_samples >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class LearningCurve:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.train)

    def rows(self):
        for epoch, (tr, va) in enumerate(zip(self.train, self.validation), start=1):
            yield epoch, "train", tr
            yield epoch, "validation", va

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "split", *TERMS, "total"])
            for epoch, split, b in self.rows():
                w.writerow([epoch, split] + [format(getattr(b, k), ".17g") for k in (*TERMS, "total")])


def split_series(n_rows, validation_fraction):
    """Index boundary between the training head and the validation tail."""
    n_val = max(2, int(round(n_rows * validation_fraction)))
    return n_rows - n_val


def window_starts(n_rows, length):
    return list(range(0, n_rows - length + 1, length))


def _mean_breakdown(items):
    keys = (*TERMS, "total")
    return LossBreakdown(**{k: float(np.mean([getattr(b, k) for b in items])) for k in keys})


def _step_gradients(params, window, rng, cfg):
    d = window.shape[1]
    grads, parts = None, []
    for _ in range(cfg.mc_samples):
        noise = rng.standard_normal((len(window), d))
        g, b = total_loss_gradients(params, window, noise, cfg.weights)
        parts.append(b)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    if cfg.mc_samples > 1:
        for k in grads:
            grads[k] /= cfg.mc_samples
    return grads, _mean_breakdown(parts)


def evaluate_loss(params, values, cfg: TrainConfig, seed):
    """Mean loss over consecutive windows of ``values`` with a fixed noise stream."""
    rng = np.random.default_rng(seed)
    length = min(cfg.window_length, len(values))
    parts = []
    for s in window_starts(len(values), length):
        w = values[s:s + length]
        noise = rng.standard_normal(w.shape)
        parts.append(total_loss(forward_batch(params, w, noise), w, cfg.weights))
    return _mean_breakdown(parts)


def train(model_config: ModelConfig, train_config: TrainConfig, dataset: TimeSeriesDataset,
          params: ModelParams | None = None):
    """Fit the model on normal-condition data.

    Windows of ``window_length`` consecutive rows are the unit of shuffling and
    of each Adam step. The last ``validation_fraction`` of the series is held
    out and never used for gradients. Returns ``(params, curve)`` where
    ``params`` are those of the best validation epoch.
    """
    cfg = train_config
    values = dataset.normal_part()
    if values.shape[1] != model_config.input_dim:
        raise ShapeError(f"dataset has {values.shape[1]} columns, model expects {model_config.input_dim}")
    if cfg.window_length > len(values):
        raise DataError(f"window_length {cfg.window_length} exceeds dataset length {len(values)}")
    cut = split_series(len(values), cfg.validation_fraction)
    train_vals, val_vals = values[:cut], values[cut:]
    starts = window_starts(len(train_vals), cfg.window_length)
    if not starts:
        raise DataError(f"training split ({len(train_vals)} rows) shorter than one window")

    params = init_params(model_config) if params is None else params
    curve = LearningCurve()
    if cfg.epochs == 0:
        return params, curve

    rng = np.random.default_rng([cfg.seed, 0])
    val_seed = [cfg.seed, 1]
    blocks = params.blocks()
    adam = AdamState(learning_rate=cfg.learning_rate)
    best, best_params, stale = np.inf, params.copy(), 0

    for epoch in range(1, cfg.epochs + 1):
        parts = []
        for i in rng.permutation(len(starts)):
            s = starts[i]
            grads, b = _step_gradients(params, train_vals[s:s + cfg.window_length], rng, cfg)
            parts.append(b)
            adam_step(adam, blocks, grads)
        tr = _mean_breakdown(parts)
        va = evaluate_loss(params, val_vals, cfg, val_seed)
        if not np.isfinite(tr.total) or not np.isfinite(va.total):
            bad = [k for k in TERMS if not np.isfinite(getattr(tr, k)) or not np.isfinite(getattr(va, k))]
            raise NonFiniteError(f"epoch {epoch}: non-finite loss in term(s) {bad}")
        curve.train.append(tr)
        curve.validation.append(va)
        log.debug("epoch %d train %.5f val %.5f", epoch, tr.total, va.total)

        if va.total < best - cfg.min_delta:
            best, best_params, stale = va.total, params.copy(), 0
            curve.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, curve.best_epoch)
                break
    return best_params, curve


@dataclass
class GridSpec:
    shared_widths: list = field(default_factory=lambda: [(16, 100, 50)])
    deterministic_widths: list = field(default_factory=lambda: [(50, 85, 16)])
    stochastic_widths: list = field(default_factory=lambda: [(50, 65, 16)])
    lambda_orthogonality: list = field(default_factory=lambda: [1.0])
    lambda_smoothness: list = field(default_factory=lambda: [1.0])
    lambda_kl: list = field(default_factory=lambda: [1.0])
    learning_rates: list = field(default_factory=lambda: [1e-3])
    window_lengths: list = field(default_factory=lambda: [64])

    def candidates(self):
        """Cartesian product in a fixed order (last field varies fastest)."""
        return list(itertools.product(
            [tuple(w) for w in self.shared_widths],
            [tuple(w) for w in self.deterministic_widths],
            [tuple(w) for w in self.stochastic_widths],
            self.lambda_orthogonality, self.lambda_smoothness, self.lambda_kl,
            self.learning_rates, self.window_lengths,
        ))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid fields {sorted(unknown)}")
        return cls(**d)


CANDIDATE_FIELDS = ("shared_widths", "deterministic_widths", "stochastic_widths",
                    "lambda_orthogonality", "lambda_smoothness", "lambda_kl",
                    "learning_rate", "window_length")


@dataclass
class CandidateResult:
    index: int
    settings: dict
    validation_total: float = np.inf
    n_parameters: int = 0
    epochs_run: int = 0
    error: str | None = None
    model_config: ModelConfig | None = None
    train_config: TrainConfig | None = None

    def row(self):
        row = {"index": self.index}
        for k, v in self.settings.items():
            row[k] = " ".join(map(str, v)) if isinstance(v, tuple) else v
        row.update(validation_total=format(self.validation_total, ".17g"),
                   n_parameters=self.n_parameters, epochs_run=self.epochs_run,
                   error=self.error or "")
        return row


def grid_search(grid: GridSpec, dataset: TimeSeriesDataset, base: TrainConfig | None = None,
                budget_epochs=50, seed=0):
    """Train every grid candidate on the same budget and rank them.

    Ranking: lowest final validation total, then fewer parameters, then
    enumeration order. Candidates that raise are ranked last with the error
    message recorded.
    """
    base = base or TrainConfig()
    cands = grid.candidates()
    if not cands:
        raise ValueError("grid is empty")
    results = []
    for i, cand in enumerate(cands):
        settings = dict(zip(CANDIDATE_FIELDS, cand))
        res = CandidateResult(i, settings)
        try:
            res.model_config = ModelConfig(
                input_dim=dataset.dim, shared_widths=settings["shared_widths"],
                deterministic_widths=settings["deterministic_widths"],
                stochastic_widths=settings["stochastic_widths"], seed=seed)
            weights = replace(base.weights, orthogonality=settings["lambda_orthogonality"],
                              smoothness=settings["lambda_smoothness"], kl=settings["lambda_kl"])
            res.train_config = replace(base, epochs=budget_epochs, weights=weights, seed=seed,
                                       learning_rate=settings["learning_rate"],
                                       window_length=settings["window_length"])
            params, curve = train(res.model_config, res.train_config, dataset)
            res.n_parameters = params.n_parameters()
            res.epochs_run = len(curve)
            res.validation_total = curve.validation[-1].total if len(curve) else np.inf
        except Exception as exc:  # noqa: BLE001 - ranked last, not fatal
            res.error = f"{type(exc).__name__}: {exc}"
            res.validation_total = np.inf
        results.append(res)
    results.sort(key=lambda r: (r.error is not None, r.validation_total, r.n_parameters, r.index))
    return results


def write_ranking_csv(results, path):
    rows = [r.row() for r in results]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["rank", *rows[0].keys()], lineterminator="\n")
        w.writeheader()
        for rank, row in enumerate(rows, start=1):
            w.writerow({"rank": rank, **row})


# -- checkpoints -------------------------------------------------------------

class CheckpointError(ValueError):
    pass


def _param_bytes(blocks):
    chunks = []
    for name in sorted(blocks):
        chunks.append(name.encode())
        chunks.append(np.ascontiguousarray(blocks[name], dtype="<f8").tobytes())
    return b"".join(chunks)


def _activations(params):
    return {name: layer.activation for name, layer in _named_layers(params)}


def _named_layers(params):
    for prefix, layers in (("shared", params.shared), ("det_head", params.det_head),
                           ("stoch_trunk", params.stoch_trunk), ("mean_head", [params.mean_head]),
                           ("log_std_head", [params.log_std_head])):
        for k, layer in enumerate(layers):
            yield f"{prefix}.{k}", layer


def save_checkpoint(params: ModelParams, config: ModelConfig, path, extra=None):
    """JSON checkpoint; floats written with 17 significant digits."""
    blocks = params.blocks()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": config.to_dict(),
        "activations": _activations(params),
        "crc32": zlib.crc32(_param_bytes(blocks)),
    }
    if extra:
        header["extra"] = extra
    # json.dumps writes shortest-repr floats; parameter arrays are formatted by hand
    text = json.dumps(header, indent=1, sort_keys=True)[:-2]
    parts = []
    for name, arr in blocks.items():
        vals = ",".join(format(v, ".17g") for v in arr.ravel())
        parts.append(f'  {json.dumps(name)}: {{"shape": {list(arr.shape)}, "values": [{vals}]}}')
    text += ',\n "parameters": {\n' + ",\n".join(parts) + "\n }\n}\n"
    with open(path, "w") as fh:
        fh.write(text)


def load_checkpoint(path):
    """Returns ``(params, config)``; verifies version, shapes and checksum."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupted checkpoint ({exc})") from None
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    try:
        config = ModelConfig.from_dict(doc["model_config"])
        stored = doc["parameters"]
        crc = doc["crc32"]
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: missing field {exc}") from None
    params = init_params(config)
    blocks = params.blocks()
    if set(stored) != set(blocks):
        raise CheckpointError(f"{path}: parameter blocks do not match model_config")
    for name, arr in blocks.items():
        entry = stored[name]
        vals = np.asarray(entry["values"], dtype=np.float64)
        if list(entry["shape"]) != list(arr.shape) or vals.size != arr.size:
            raise CheckpointError(f"{path}: block {name} has shape {entry['shape']}, config implies {list(arr.shape)}")
        arr[...] = vals.reshape(arr.shape)
    if zlib.crc32(_param_bytes(blocks)) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")
    for name, layer in _named_layers(params):
        act = doc.get("activations", {}).get(name)
        if act is not None:
            layer.activation = act
    return params, config


__all__ = [
    "TrainConfig", "LearningCurve", "GridSpec", "CandidateResult", "CheckpointError",
    "train", "evaluate_loss", "grid_search", "write_ranking_csv", "save_checkpoint",
    "load_checkpoint",
]
