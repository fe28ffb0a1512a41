"""Command-line entry point: ``orthofd <subcommand>``.

Exit codes: 0 success, 2 usage/validation error, 1 runtime failure. Every
subcommand writes ``manifest_<command>.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__, experiment
from .alarm import (ThresholdRule, empirical_threshold, evaluate, filter_signal, histogram_table,
                    latency_bench, optimal_threshold, write_alarm_states)
from .data import (FAULT_SHIFTS, DataError, GaussianSpec, Scaler, TimeSeriesDataset, apply_scaler,
                   export_csv, fault_preset, fit_scaler, generate_gaussian, inject_fault, load_csv)
from .loss import LossWeights
from .model import ModelConfig
from .training import (GridSpec, TrainConfig, grid_search, load_checkpoint, save_checkpoint, train,
                       write_ranking_csv)

log = logging.getLogger("orthofd")


class UsageError(Exception):
    pass


# -- argument types ------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not v >= 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {s}")
    return v


def _fraction(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {s}")
    return v


def _float_list(s):
    try:
        return [float(x) for x in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


# -- helpers ---------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out_dir, command, config, seeds, inputs, outputs, started):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seeds": seeds,
        "inputs": {os.path.basename(p): {"path": p, "sha256": _sha256(p)} for p in inputs},
        "outputs": {os.path.basename(p): {"path": p, "sha256": _sha256(p)} for p in outputs},
        "started": started,
        "finished": _now(),
    }
    path = os.path.join(out_dir, f"manifest_{command}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _read_config(path):
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("--config must hold a JSON object")
    return cfg


def _sidecar(path):
    """Options stored next to a CSV as ``<file>.options.json`` (may be absent)."""
    side = path + ".options.json"
    if os.path.exists(side):
        with open(side) as fh:
            return json.load(fh)
    return {}


def _write_sidecar(csv_path, **options):
    with open(csv_path + ".options.json", "w") as fh:
        json.dump(options, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path + ".options.json"


def _load_dataset(args, need_onset=False):
    opts = _sidecar(args.data)
    for key in ("has_header", "columns", "fault_onset", "noise_std", "noise_seed"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if need_onset and opts.get("fault_onset") is None:
        raise UsageError("--onset is required (no fault_onset in the data sidecar)")
    keys = ("has_header", "columns", "fault_onset", "noise_std", "noise_seed")
    return load_csv(args.data, **{k: v for k, v in opts.items() if k in keys and v is not None})


def _scaler_from_checkpoint(extra):
    s = (extra or {}).get("scaler")
    return Scaler(s["mean"], s["std"]) if s else None


def _load_model(path):
    params, cfg = load_checkpoint(path)
    with open(path) as fh:
        extra = json.load(fh).get("extra", {})
    return params, cfg, _scaler_from_checkpoint(extra)


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    spec = GaussianSpec(mean=args.mean, std=args.std, dim=args.dim, n=args.n, seed=args.seed)
    ds = generate_gaussian(spec)
    onset = None
    if args.fault:
        onset = args.onset
        if not 1 <= onset <= args.n - 1:
            raise UsageError(f"--onset must be in [1, {args.n - 1}]")
        ds = inject_fault(ds, fault_preset(args.fault, dim=args.dim, seed=args.seed + 1,
                                           normal_mean=args.mean, std=args.std), onset)
    out = os.path.join(args.out_dir, args.name)
    export_csv(ds, out)
    side = _write_sidecar(out, has_header=True, columns=None, fault_onset=onset,
                          noise_std=None, noise_seed=None)
    config = dict(dim=args.dim, n=args.n, mean=args.mean, std=args.std, fault=args.fault, onset=onset)
    _write_manifest(args.out_dir, "generate", config, {"seed": args.seed}, [], [out, side], started)
    print(out)


def _train_configs(args, dim):
    overrides = _read_config(args.config)
    model_kw = ModelConfig.for_dim(dim, seed=args.seed).to_dict()
    model_kw.update(overrides.get("model", {}))
    weights = LossWeights(orthogonality=args.lambda_orth, nll=args.lambda_nll,
                          smoothness=args.lambda_smooth, kl=args.lambda_kl,
                          **overrides.get("weights", {}))
    train_kw = dict(epochs=args.epochs, window_length=args.window_length, learning_rate=args.lr,
                    validation_fraction=args.val_fraction, seed=args.seed, mc_samples=args.mc_samples,
                    weights=weights)
    train_kw.update(overrides.get("train", {}))
    try:
        return ModelConfig(**model_kw), TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def cmd_train(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    ds = _load_dataset(args)
    model_cfg, train_cfg = _train_configs(args, ds.dim)
    scaler = None
    if args.scale:
        scaler = fit_scaler(ds)
        ds = apply_scaler(scaler, ds)
    params, curve = train(model_cfg, train_cfg, ds)
    ckpt = os.path.join(args.out_dir, "checkpoint.json")
    extra = {"train_config": train_cfg.to_dict(), "scaler": scaler.to_dict() if scaler else None}
    save_checkpoint(params, model_cfg, ckpt, extra=extra)
    curve_path = os.path.join(args.out_dir, "curve.csv")
    curve.to_csv(curve_path)
    config = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "scaled": bool(args.scale)}
    _write_manifest(args.out_dir, "train", config, {"seed": args.seed}, [args.data], [ckpt, curve_path], started)
    if len(curve):
        print(f"epochs {len(curve)}  train {curve.train[-1].total:.6g}  validation {curve.validation[-1].total:.6g}")
    print(ckpt)


def cmd_filter(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    params, cfg, scaler = _load_model(args.checkpoint)
    ds = _load_dataset(args)
    if ds.dim != cfg.input_dim:
        raise DataError(f"data has {ds.dim} columns, checkpoint expects {cfg.input_dim}")
    filt = filter_signal(params, ds, scaler)
    side = TimeSeriesDataset(np.hstack([ds.values, filt.values]), ds.fault_onset,
                             ds.names + [f"{n}_filtered" for n in ds.names])
    out = os.path.join(args.out_dir, "filtered.csv")
    export_csv(side, out)
    _write_manifest(args.out_dir, "filter", {"checkpoint": args.checkpoint}, {},
                    [args.checkpoint, args.data], [out], started)
    print(out)


def _rule_for(args, raw, filt):
    dim = raw.dim
    directions = args.direction.split(",")
    if len(directions) == 1:
        directions = directions * dim
    if args.threshold is not None:
        thr = args.threshold
        thr = thr * dim if len(thr) == 1 else thr
        if len(thr) != dim:
            raise UsageError(f"--threshold needs 1 or {dim} values, got {len(thr)}")
    elif args.normal_mean is not None and args.fault_mean is not None:
        thr = [optimal_threshold(args.normal_mean, args.fault_mean)] * dim
    elif args.empirical:
        onset = filt.fault_onset
        thr = [empirical_threshold(filt.values[:onset, j], filt.values[onset:, j]) for j in range(dim)]
    else:
        raise UsageError("give --threshold, or --normal-mean and --fault-mean, or --empirical")
    try:
        return ThresholdRule(thr, directions)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_eval(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    params, cfg, scaler = _load_model(args.checkpoint)
    ds = _load_dataset(args, need_onset=True)
    if ds.dim != cfg.input_dim:
        raise DataError(f"data has {ds.dim} columns, checkpoint expects {cfg.input_dim}")
    filt = filter_signal(params, ds, scaler)
    rule = _rule_for(args, ds, filt)
    outputs = []
    report = evaluate(filt, rule)
    raw_report = evaluate(ds, rule)
    for name, rep in (("report.json", report), ("report_raw.json", raw_report)):
        path = os.path.join(args.out_dir, name)
        rep.to_json(path)
        outputs.append(path)
    alarms = os.path.join(args.out_dir, "alarms.csv")
    write_alarm_states(filt, rule, alarms)
    outputs.append(alarms)
    _, hist = histogram_table(ds, filt, bins=args.bins)
    hist_path = os.path.join(args.out_dir, "histogram.csv")
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "raw_pre", "raw_post", "filtered_pre", "filtered_post"])
        w.writerows([[format(v, ".17g") for v in row] for row in hist])
    outputs.append(hist_path)
    config = {"checkpoint": args.checkpoint, "thresholds": rule.thresholds.tolist(),
              "directions": rule.directions, "fault_onset": ds.fault_onset}
    _write_manifest(args.out_dir, "eval", config, {}, [args.checkpoint, args.data], outputs, started)
    print(f"filtered FAR {report.far_mean:.4f} MAR {report.mar_mean:.4f}   "
          f"raw FAR {raw_report.far_mean:.4f} MAR {raw_report.mar_mean:.4f}")


def cmd_bench(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    params, cfg, _ = _load_model(args.checkpoint)
    inputs = [args.checkpoint]
    if args.data:
        ds = _load_dataset(args)
        inputs.append(args.data)
    else:
        ds = experiment.fault_scenarios(args.seed, dim=cfg.input_dim)["F3"]
    rule = ThresholdRule.uniform(args.threshold, cfg.input_dim)
    stats = {dt: latency_bench(params, ds, args.repetitions, rule, dtype=dt).to_dict() for dt in args.dtype}
    out = os.path.join(args.out_dir, "latency.json")
    with open(out, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out_dir, "bench", {"repetitions": args.repetitions, "dtype": args.dtype},
                    {"seed": args.seed}, inputs, [out], started)
    for dt, s in stats.items():
        print(f"{dt}: mean {s['mean'] * 1e3:.4f} ms  p50 {s['p50'] * 1e3:.4f} ms  p99 {s['p99'] * 1e3:.4f} ms")


def cmd_gridsearch(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    with open(args.grid) as fh:
        try:
            grid = GridSpec.from_dict(json.load(fh))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad grid file: {exc}") from None
    ds = _load_dataset(args)
    base = TrainConfig(seed=args.seed, validation_fraction=args.val_fraction)
    results = grid_search(grid, ds, base, budget_epochs=args.budget_epochs, seed=args.seed)
    out = os.path.join(args.out_dir, "ranking.csv")
    write_ranking_csv(results, out)
    outputs = [out]
    best = results[0]
    if args.retrain and best.error is None:
        tc = replace(best.train_config, epochs=args.epochs)
        params, curve = train(best.model_config, tc, ds)
        ckpt = os.path.join(args.out_dir, "checkpoint.json")
        save_checkpoint(params, best.model_config, ckpt, extra={"train_config": tc.to_dict()})
        curve_path = os.path.join(args.out_dir, "curve.csv")
        curve.to_csv(curve_path)
        outputs += [ckpt, curve_path]
    _write_manifest(args.out_dir, "gridsearch", {"grid": args.grid, "budget_epochs": args.budget_epochs},
                    {"seed": args.seed}, [args.data, args.grid], outputs, started)
    print(out)


def cmd_repro(args):
    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    params, curve, results = experiment.run(seed=args.seed, epochs=args.epochs, out_dir=args.out_dir)
    outputs = sorted(os.path.join(args.out_dir, f) for f in os.listdir(args.out_dir)
                     if not f.startswith("manifest_") and f != "latency.json")
    if args.bench:
        ds = results[-1].raw_signal
        rule = ThresholdRule.uniform(results[-1].threshold, ds.dim)
        stats = latency_bench(params, ds, repetitions=args.repetitions, rule=rule)
        lat = os.path.join(args.out_dir, "latency.json")
        with open(lat, "w") as fh:
            json.dump({"float64": stats.to_dict()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append(lat)
    model_cfg, train_cfg = experiment.scenario_configs(args.seed, args.epochs)
    config = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "onset": experiment.ONSET,
              "n_fault": experiment.N_FAULT, "n_train": experiment.N_TRAIN}
    _write_manifest(args.out_dir, "repro", config, {"seed": args.seed}, [], outputs, started)
    print(f"{'scenario':8} {'thr':>5} {'raw FAR':>8} {'raw MAR':>8} {'filt FAR':>9} {'filt MAR':>9}")
    for r in results:
        print(f"{r.name:8} {r.threshold:5.2f} {r.raw.far_mean:8.3f} {r.raw.mar_mean:8.3f} "
              f"{r.filtered.far_mean:9.3f} {r.filtered.mar_mean:9.3f}")


# -- parser --------------------------------------------------------------------------

def _data_flags(p, onset_help="fault onset index (overrides the sidecar)"):
    p.add_argument("--data", required=True, help="CSV file, one sample per row")
    p.add_argument("--columns", default=None, help='column selection, e.g. "1:22" (1-based) or names')
    p.add_argument("--has-header", dest="has_header", default=None, action=argparse.BooleanOptionalAction)
    p.add_argument("--onset", dest="fault_onset", type=_positive_int, default=None, help=onset_help)
    p.add_argument("--noise-std", dest="noise_std", type=_nonneg_float, default=None,
                   help="add white Gaussian noise after loading")
    p.add_argument("--noise-seed", dest="noise_seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="orthofd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--config", default=None, help="JSON file with model/train/weights overrides")

    p = sub.add_parser("generate", help="write a synthetic Gaussian dataset")
    common(p)
    p.add_argument("--dim", type=_positive_int, default=16)
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--mean", type=float, default=2.0)
    p.add_argument("--std", type=_positive_float, default=1.0)
    p.add_argument("--fault", choices=sorted(FAULT_SHIFTS), default=None,
                   help="inject a mean-shift fault preset at --onset")
    p.add_argument("--onset", type=_positive_int, default=100)
    p.add_argument("--name", default="data.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on normal-condition data")
    common(p)
    _data_flags(p)
    p.add_argument("--epochs", type=_nonneg_int, default=200)
    p.add_argument("--window-length", type=_positive_int, default=64)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--val-fraction", type=_fraction, default=0.2)
    p.add_argument("--mc-samples", type=_positive_int, default=1)
    p.add_argument("--lambda-orth", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda-nll", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda-smooth", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda-kl", type=_nonneg_float, default=1.0)
    p.add_argument("--scale", action=argparse.BooleanOptionalAction, default=True,
                   help="standardize with statistics of the normal rows (default on)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", help="emit original and filtered signals side by side")
    common(p)
    p.add_argument("--checkpoint", required=True)
    _data_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="alarm evaluation (FAR/MAR/delay) of the filtered signal")
    common(p)
    p.add_argument("--checkpoint", required=True)
    _data_flags(p)
    p.add_argument("--threshold", type=_float_list, default=None, help="one value or one per dimension")
    p.add_argument("--normal-mean", type=float, default=None)
    p.add_argument("--fault-mean", type=float, default=None)
    p.add_argument("--empirical", action="store_true", help="per-dimension FAR+MAR minimizing cut")
    p.add_argument("--direction", default="high", help="high or low, or one per dimension")
    p.add_argument("--bins", type=_positive_int, default=50)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-sample inference latency")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--columns", default=None)
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--repetitions", type=_positive_int, default=5)
    p.add_argument("--dtype", nargs="+", choices=["float64", "float32"], default=["float64"])
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gridsearch", help="rank hyper-parameter candidates")
    common(p)
    _data_flags(p)
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--budget-epochs", type=_positive_int, default=50)
    p.add_argument("--val-fraction", type=_fraction, default=0.2)
    p.add_argument("--retrain", action="store_true", help="retrain the winner with --epochs")
    p.add_argument("--epochs", type=_positive_int, default=200)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("repro", help="synthetic N(2,1) fault scenarios end to end")
    common(p)
    p.add_argument("--epochs", type=_nonneg_int, default=200)
    p.add_argument("--bench", action=argparse.BooleanOptionalAction, default=True,
                   help="also time inference (written to latency.json)")
    p.add_argument("--repetitions", type=_positive_int, default=3)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"orthofd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported, exit 1
        if args.verbose:
            log.exception("command failed")
        print(f"orthofd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
