"""Time-series datasets: synthetic Gaussian scenarios, fault injection,
standardization and CSV ingestion/export."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

NORMAL_MEAN = 2.0
NORMAL_STD = 1.0
# mean shifts of the small / medium / large fault scenarios
FAULT_SHIFTS = {"F1": 0.5, "F2": 1.0, "F3": 2.0}


class DataError(ValueError):
    """Bad input data (shape, content or file format)."""


@dataclass
class TimeSeriesDataset:
    values: np.ndarray
    fault_onset: int | None = None
    variable_names: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D (time x dim), got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("values contain NaN or Inf")
        if self.fault_onset is not None:
            self.fault_onset = int(self.fault_onset)
            if not 1 <= self.fault_onset <= len(self) - 1:
                raise DataError(f"fault_onset {self.fault_onset} outside [1, {len(self) - 1}]")
        if self.variable_names is not None:
            self.variable_names = [str(n) for n in self.variable_names]
            if len(self.variable_names) != self.dim:
                raise DataError(f"{len(self.variable_names)} names for {self.dim} columns")

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def names(self):
        return self.variable_names or [f"x{j + 1}" for j in range(self.dim)]

    def normal_part(self):
        """Rows before the fault onset (all rows when there is no onset)."""
        return self.values if self.fault_onset is None else self.values[: self.fault_onset]

    def faulty_part(self):
        if self.fault_onset is None:
            return self.values[:0]
        return self.values[self.fault_onset:]


@dataclass
class GaussianSpec:
    mean: float | list = NORMAL_MEAN
    std: float | list = NORMAL_STD
    dim: int = 16
    n: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n < 1:
            raise DataError("dim and n must be positive")
        std = np.broadcast_to(np.asarray(self.std, dtype=np.float64), (self.dim,))
        if not np.all(std > 0):
            raise DataError(f"std must be > 0 in every dimension, got {self.std}")
        np.broadcast_to(np.asarray(self.mean, dtype=np.float64), (self.dim,))

    def means(self):
        return np.broadcast_to(np.asarray(self.mean, dtype=np.float64), (self.dim,))

    def stds(self):
        return np.broadcast_to(np.asarray(self.std, dtype=np.float64), (self.dim,))


def generate_gaussian(spec: GaussianSpec) -> TimeSeriesDataset:
    rng = np.random.default_rng(spec.seed)
    values = spec.means() + spec.stds() * rng.standard_normal((spec.n, spec.dim))
    return TimeSeriesDataset(values)


def fault_preset(name, dim=16, n=10_000, seed=0, normal_mean=NORMAL_MEAN, std=NORMAL_STD):
    """Fault spec F1/F2/F3: the normal distribution shifted by 0.5 / 1 / 2."""
    try:
        shift = FAULT_SHIFTS[name]
    except KeyError:
        raise DataError(f"unknown fault preset {name!r}; choose from {sorted(FAULT_SHIFTS)}") from None
    return GaussianSpec(mean=normal_mean + shift, std=std, dim=dim, n=n, seed=seed)


def inject_fault(normal: TimeSeriesDataset, fault_spec: GaussianSpec, onset: int) -> TimeSeriesDataset:
    """Keep the first ``onset`` rows of ``normal`` and fill the rest from ``fault_spec``.

    The output has the same length as ``normal``; ``fault_spec.n`` is ignored.
    """
    if fault_spec.dim != normal.dim:
        raise DataError(f"fault dim {fault_spec.dim} != data dim {normal.dim}")
    t = len(normal)
    if not 1 <= onset <= t - 1:
        raise DataError(f"onset {onset} outside [1, {t - 1}]")
    faulty = generate_gaussian(replace(fault_spec, n=t - onset)).values
    values = np.concatenate([normal.values[:onset], faulty])
    return TimeSeriesDataset(values, onset, normal.variable_names)


def scenario(fault="F3", n_normal=100, n_fault=1000, dim=16, seed=0):
    """Normal rows then faulty rows, onset at ``n_normal``."""
    normal = generate_gaussian(GaussianSpec(dim=dim, n=n_normal + n_fault, seed=seed))
    return inject_fault(normal, fault_preset(fault, dim=dim, seed=seed + 1), n_normal)


def add_noise(dataset: TimeSeriesDataset, noise_std, seed=0) -> TimeSeriesDataset:
    """Additive white Gaussian noise with per-dimension (or scalar) std."""
    std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (dataset.dim,))
    if np.any(std < 0):
        raise DataError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = dataset.values + std * rng.standard_normal(dataset.values.shape)
    return replace(dataset, values=noisy)


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(~(self.std > 0)):
            bad = np.flatnonzero(~(self.std > 0)).tolist()
            raise DataError(f"zero-variance dimension(s) {bad}")

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def fit_scaler(normal: TimeSeriesDataset) -> Scaler:
    """Per-dimension mean/std of the normal rows only."""
    vals = normal.normal_part()
    return Scaler(vals.mean(axis=0), vals.std(axis=0))


def apply_scaler(scaler: Scaler, dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    return replace(dataset, values=(dataset.values - scaler.mean) / scaler.std)


def invert_scaler(scaler: Scaler, dataset: TimeSeriesDataset) -> TimeSeriesDataset:
    return replace(dataset, values=dataset.values * scaler.std + scaler.mean)


def parse_columns(selection, header=None, n_cols=None):
    """Resolve a column selection to 0-based indices.

    ``selection`` is a string such as ``"1:22"`` or ``"1:5,9,temp"`` (1-based,
    inclusive ranges; bare words are header names) or a list of ints (1-based)
    / names.
    """
    if selection is None:
        return list(range(n_cols))
    items = selection.split(",") if isinstance(selection, str) else list(selection)
    out = []
    for item in items:
        if isinstance(item, str):
            item = item.strip()
            if not item:
                continue
            if ":" in item:
                lo, hi = item.split(":", 1)
                try:
                    lo, hi = int(lo), int(hi)
                except ValueError:
                    raise DataError(f"bad column range {item!r}") from None
                out.extend(range(lo - 1, hi))
                continue
            if item.lstrip("-").isdigit():
                out.append(int(item) - 1)
                continue
            if header is None or item not in header:
                raise DataError(f"unknown column name {item!r}")
            out.append(header.index(item))
        else:
            out.append(int(item) - 1)
    if not out:
        raise DataError("column selection is empty")
    for j in out:
        if not 0 <= j < n_cols:
            raise DataError(f"column {j + 1} out of range (file has {n_cols} columns)")
    return out


def _looks_numeric(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, has_header=None, columns=None, fault_onset=None, noise_std=None,
             noise_seed=0) -> TimeSeriesDataset:
    """Read a comma-separated file of time-ordered samples.

    ``has_header=None`` detects a header by checking whether the first row is
    non-numeric. Column selection follows :func:`parse_columns`. Rows are
    numbered from 1 in error messages, counting the header.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    if has_header is None:
        has_header = not all(_looks_numeric(c) for c in rows[0])
    header = [c.strip() for c in rows[0]] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise DataError(f"{path} has no data rows")
    n_cols = len(header) if header else len(body[0])
    first_row = 2 if has_header else 1
    values = np.empty((len(body), n_cols))
    for i, row in enumerate(body):
        lineno = first_row + i
        if len(row) != n_cols:
            raise DataError(f"row {lineno}: expected {n_cols} cells, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {lineno}, column {j + 1}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"row {lineno}, column {j + 1}: non-finite value {cell!r}")
            values[i, j] = v
    idx = parse_columns(columns, header, n_cols)
    names = [header[j] for j in idx] if header else None
    ds = TimeSeriesDataset(values[:, idx], fault_onset, names)
    if noise_std:
        ds = add_noise(ds, noise_std, noise_seed)
    return ds


def export_csv(dataset: TimeSeriesDataset, path, header=True):
    """Write values with 17 significant digits (exact float64 round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(dataset.names)
        for row in dataset.values:
            w.writerow([format(v, ".17g") for v in row])
