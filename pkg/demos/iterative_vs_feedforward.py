"""
Latent search versus a learned latent predictor
===============================================

A small GAN is trained on synthetic faces and frozen. The classic approach
searches for the latent of every masked image by gradient descent (here 1500
iterations). The alternative trains a predictor once, then fills a hole with a
single forward pass. Both compose the generated image into the hole only.
"""
import os
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from priorinpaint.baseline import inpaint_iterative_batch
from priorinpaint.evaluation import psnr_batch
from priorinpaint.gan import GanConfig, train_gan
from priorinpaint.masking import apply_mask, default_spec, generate_mask
from priorinpaint.predictor import PredictorConfig, inpaint, train_predictor
from priorinpaint.synthetic import random_params, render_face

torch.set_num_threads(1)
out = os.environ.get("DEMO_OUT", "demo_out")
os.makedirs(out, exist_ok=True)
steps = int(os.environ.get("DEMO_STEPS", "3000"))

rng = np.random.default_rng(0)
train = np.stack([render_face(random_params(rng))[0] for _ in range(2000)])[:, None].astype(np.float32)
test = np.stack([render_face(random_params(rng))[0] for _ in range(16)])[:, None].astype(np.float32)

t0 = time.perf_counter()
gen, disc, _ = train_gan(train, GanConfig(steps=steps, ema=0.99))
print(f"GAN trained in {time.perf_counter() - t0:.0f}s")
pred, hist = train_predictor(gen, disc, train, cfg=PredictorConfig(steps=steps // 2))
print(f"predictor loss: first {hist[0]['loss']:.4f}, last {hist[-1]['loss']:.4f}")

masks = np.stack([generate_mask(default_spec("RC", i), 32, 32) for i in range(16)])[:, None]
t0 = time.perf_counter()
ff, _ = inpaint(pred, gen, test, masks)
t_ff = time.perf_counter() - t0
t0 = time.perf_counter()
it, _ = inpaint_iterative_batch(gen, disc, test, masks, iters=1500)
t_it = time.perf_counter() - t0
print(f"one pass: {t_ff * 1e3:.1f} ms, PSNR {psnr_batch(ff, test).mean():.2f} dB")
print(f"1500 iterations: {t_it:.1f} s, PSNR {psnr_batch(it, test).mean():.2f} dB")

rows = [test, apply_mask(test, masks), ff.numpy(), it.numpy()]
fig, axes = plt.subplots(4, 8, figsize=(8, 4.4))
for i, (row, name) in enumerate(zip(rows, ["original", "masked", "one pass", "search"])):
    for j in range(8):
        axes[i, j].imshow(row[j, 0], cmap="gray", vmin=0, vmax=1)
        axes[i, j].axis("off")
    axes[i, 0].set_title(name, fontsize=7, loc="left")
fig.tight_layout()
fig.savefig(f"{out}/iterative_vs_feedforward.png", dpi=120)
