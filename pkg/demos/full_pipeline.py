"""
The whole experiment from one configuration
===========================================

``priorinpaint.pipeline`` chains data generation, the two GANs, the five
ablation models (per-frame / windowed, with and without keypoint priors,
with and without the consistency loss), the ablation table and the speed
benchmark. Every stage records its checkpoint hash and is reused on rerun
while its inputs are unchanged. The same steps are available from the
``priorinpaint`` command.

This demo runs a miniature configuration; pass ``full`` to run the default
desk-scale setup (roughly 45 minutes on one CPU core).
"""
import sys

from priorinpaint.config import resolve, smoke_config
from priorinpaint.pipeline import run_all, run_bench, write_summary

out = "demo_out/pipeline"
cfg = resolve(out=out) if sys.argv[1:] == ["full"] else smoke_config(out)
result = run_all(cfg, log_fn=print)
run_bench(cfg)
print(open(write_summary(cfg)).read())
