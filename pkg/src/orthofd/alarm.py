"""Alarm layer: deterministic filtering, limit checks, FAR/MAR/delay and latency."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, asdict, replace

import numpy as np

from .data import DataError, TimeSeriesDataset
from .model import ModelParams, encode_deterministic
from .numerics import ShapeError

DIRECTIONS = ("high", "low")


@dataclass
class ThresholdRule:
    thresholds: np.ndarray
    directions: list = None

    def __post_init__(self):
        self.thresholds = np.atleast_1d(np.asarray(self.thresholds, dtype=np.float64))
        if self.directions is None:
            self.directions = ["high"] * len(self.thresholds)
        elif isinstance(self.directions, str):
            self.directions = [self.directions] * len(self.thresholds)
        self.directions = list(self.directions)
        if len(self.directions) != len(self.thresholds):
            raise ValueError("need one direction per threshold")
        bad = set(self.directions) - set(DIRECTIONS)
        if bad:
            raise ValueError(f"unknown direction(s) {sorted(bad)}")

    @classmethod
    def uniform(cls, threshold, dim, direction="high"):
        return cls(np.full(dim, float(threshold)), [direction] * dim)

    def alarms(self, values):
        """Boolean alarm state for every sample and dimension."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.thresholds):
            raise ShapeError(f"rule has {len(self.thresholds)} thresholds, signal has {values.shape[-1]} dims")
        high = np.array([d == "high" for d in self.directions])
        return np.where(high, values > self.thresholds, values < self.thresholds)


@dataclass
class LatencyStats:
    mean: float
    p50: float
    p99: float
    n_samples: int
    dtype: str = "float64"

    def to_dict(self):
        return asdict(self)


@dataclass
class AlarmReport:
    far: list
    mar: list
    far_mean: float
    mar_mean: float
    detection_delay: list  # samples after onset; None = never detected
    thresholds: list
    directions: list
    fault_onset: int
    n_normal: int
    n_faulty: int
    variable_names: list = None
    latency: LatencyStats | None = None

    def to_dict(self):
        d = asdict(self)
        if self.latency is None:
            d.pop("latency")
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def filter_signal(params: ModelParams, dataset: TimeSeriesDataset, scaler=None) -> TimeSeriesDataset:
    """Replace every row by its deterministic representation.

    With a ``scaler`` the model works in standardized units and the output is
    mapped back to measurement units.
    """
    vals = dataset.values
    if scaler is not None:
        vals = (vals - scaler.mean) / scaler.std
    out = encode_deterministic(params, vals)
    if scaler is not None:
        out = out * scaler.std + scaler.mean
    return replace(dataset, values=out)


def optimal_threshold(normal_mean, fault_mean):
    """Equal-variance Gaussian decision boundary (midpoint of the two means)."""
    return 0.5 * (normal_mean + fault_mean)


def empirical_threshold(normal_values, fault_values):
    """Cut point minimizing FAR + MAR for a high alarm (value > cut).

    Candidates are midpoints between consecutive distinct pooled values; ties
    go to the smaller cut.
    """
    normal = np.sort(np.ravel(np.asarray(normal_values, dtype=np.float64)))
    fault = np.sort(np.ravel(np.asarray(fault_values, dtype=np.float64)))
    if normal.size == 0 or fault.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.unique(np.concatenate([normal, fault]))
    if pooled.size == 1:
        return float(pooled[0])
    cuts = 0.5 * (pooled[:-1] + pooled[1:])
    far = 1.0 - np.searchsorted(normal, cuts, side="right") / normal.size
    mar = np.searchsorted(fault, cuts, side="right") / fault.size
    return float(cuts[np.argmin(far + mar)])


def evaluate(signal: TimeSeriesDataset, rule: ThresholdRule) -> AlarmReport:
    """Sample-wise limit check against ``rule``; rates per dimension."""
    if signal.fault_onset is None:
        raise DataError("evaluation needs a dataset with fault_onset")
    onset = signal.fault_onset
    alarms = rule.alarms(signal.values)
    pre, post = alarms[:onset], alarms[onset:]
    far = pre.mean(axis=0)
    mar = 1.0 - post.mean(axis=0)
    delays = []
    for j in range(signal.dim):
        hits = np.flatnonzero(post[:, j])
        delays.append(int(hits[0]) if hits.size else None)
    return AlarmReport(
        far=far.tolist(), mar=mar.tolist(),
        far_mean=float(far.mean()), mar_mean=float(mar.mean()),
        detection_delay=delays, thresholds=rule.thresholds.tolist(),
        directions=list(rule.directions), fault_onset=onset,
        n_normal=int(onset), n_faulty=int(len(signal) - onset),
        variable_names=signal.names,
    )


def write_alarm_states(signal: TimeSeriesDataset, rule: ThresholdRule, path):
    """Long-format CSV: time, dimension, value, threshold, alarm (0/1)."""
    alarms = rule.alarms(signal.values)
    names = signal.names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "dimension", "value", "threshold", "alarm"])
        for t in range(len(signal)):
            for j in range(signal.dim):
                w.writerow([t, names[j], format(signal.values[t, j], ".17g"),
                            format(rule.thresholds[j], ".17g"), int(alarms[t, j])])


def histogram_table(raw: TimeSeriesDataset, filtered: TimeSeriesDataset, bins=50):
    """Pre/post-onset histograms of raw and filtered values on shared bin edges.

    Returns ``(edges, rows)`` with rows ``(bin_left, bin_right, raw_pre,
    raw_post, filtered_pre, filtered_post)`` as densities.
    """
    onset = raw.fault_onset
    if onset is None:
        raise DataError("histograms need a dataset with fault_onset")
    both = np.concatenate([raw.values.ravel(), filtered.values.ravel()])
    edges = np.histogram_bin_edges(both, bins=bins)
    cols = []
    for ds in (raw, filtered):
        for part in (ds.values[:onset], ds.values[onset:]):
            cols.append(np.histogram(part.ravel(), bins=edges, density=True)[0])
    rows = [(edges[i], edges[i + 1], *(c[i] for c in cols)) for i in range(len(edges) - 1)]
    return edges, rows


def latency_bench(params: ModelParams, dataset: TimeSeriesDataset, repetitions=1, rule=None,
                  max_samples=1000, dtype="float64") -> LatencyStats:
    """Wall-clock seconds per sample of filtering one row plus the limit check.

    Runs one untimed warm-up pass, then ``repetitions`` timed passes over up to
    ``max_samples`` rows. ``dtype="float32"`` times a single-precision copy of
    the deterministic path.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rows = dataset.values[:max_samples]
    rule = rule or ThresholdRule.uniform(0.0, dataset.dim)
    thr = rule.thresholds
    high = np.array([d == "high" for d in rule.directions])
    layers = [(l.weights.astype(dtype), l.bias.astype(dtype), l.activation == "tanh")
              for l in params.shared + params.det_head]
    rows = rows.astype(dtype)
    thr = thr.astype(dtype)

    def infer(y):
        h = y
        for w, b, squash in layers:
            h = w @ h + b
            if squash:
                h = np.tanh(h)
        return np.where(high, h > thr, h < thr)

    for y in rows:
        infer(y)
    timings = np.empty(repetitions * len(rows))
    clock = time.perf_counter
    i = 0
    for _ in range(repetitions):
        for y in rows:
            t0 = clock()
            infer(y)
            timings[i] = clock() - t0
            i += 1
    return LatencyStats(float(timings.mean()), float(np.percentile(timings, 50)),
                        float(np.percentile(timings, 99)), int(timings.size), dtype)
