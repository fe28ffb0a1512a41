"""Per-sample inference time of the deterministic path plus the limit check."""

import argparse

from orthofd.alarm import ThresholdRule, latency_bench
from orthofd.experiment import fault_scenarios
from orthofd.model import ModelConfig, init_params
from orthofd.training import load_checkpoint

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--checkpoint", default=None, help="trained checkpoint; untrained weights otherwise")
parser.add_argument("--repetitions", type=int, default=5)
args = parser.parse_args()

if args.checkpoint:
    params, cfg = load_checkpoint(args.checkpoint)
else:
    cfg = ModelConfig()
    params = init_params(cfg)

# timing does not depend on the weights, only on the layer shapes
ds = fault_scenarios(0, dim=cfg.input_dim)["F3"]
rule = ThresholdRule.uniform(3.0, cfg.input_dim)
for dtype in ("float64", "float32"):
    s = latency_bench(params, ds, args.repetitions, rule, dtype=dtype)
    print(f"{dtype}: mean {s.mean * 1e6:7.1f} us  p50 {s.p50 * 1e6:7.1f} us  p99 {s.p99 * 1e6:7.1f} us "
          f"({s.n_samples} samples)")
print("published value: about 300 us per sample")
