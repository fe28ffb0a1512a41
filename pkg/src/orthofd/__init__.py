"""Fault-detection filtering with a factorized deterministic/stochastic encoder."""

__version__ = "0.1.0"

from .numerics import Layer, AdamState, adam_step, net_forward, net_backward, finite_difference_gradient
from .model import ModelConfig, ModelParams, EncodedBatch, init_params, encode_deterministic, encode_stochastic, forward_batch
from .loss import LossWeights, LossBreakdown, total_loss, total_loss_gradients
from .data import TimeSeriesDataset, GaussianSpec, generate_gaussian, inject_fault, load_csv, export_csv, fit_scaler, apply_scaler
from .training import TrainConfig, GridSpec, train, grid_search, save_checkpoint, load_checkpoint
from .alarm import ThresholdRule, AlarmReport, filter_signal, optimal_threshold, empirical_threshold, evaluate, latency_bench
