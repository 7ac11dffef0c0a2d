"""
Hole masks and composition
==========================

Three families of holes: a random central rectangle (RC), free-form brush
strokes (RF) and a random checkerboard (RCh). A mask holds 1 for kept pixels
and 0 for holes; ``compose`` pastes generated content into the holes only.
"""
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from priorinpaint.masking import apply_mask, compose, default_spec, generate_mask, hole_fraction
from priorinpaint.synthetic import random_params, render_face

out = os.environ.get("DEMO_OUT", "demo_out")
os.makedirs(out, exist_ok=True)

# one face, three hole families, two seeds each
face, _ = render_face(random_params(np.random.default_rng(0)))
fig, axes = plt.subplots(2, 3, figsize=(6, 4))
for j, kind in enumerate(["RC", "RF", "RCh"]):
    for i in range(2):
        m = generate_mask(default_spec(kind, seed=i), 32, 32)
        axes[i, j].imshow(apply_mask(face, m), cmap="gray", vmin=0, vmax=1)
        axes[i, j].set_title(f"{kind}  hole {hole_fraction(m):.2f}", fontsize=8)
        axes[i, j].axis("off")
fig.tight_layout()
fig.savefig(f"{out}/masks.png", dpi=120)

# hole fractions over many seeds
for kind in ["RC", "RF", "RCh"]:
    f = np.array([hole_fraction(generate_mask(default_spec(kind, s), 32, 32)) for s in range(1000)])
    print(f"{kind:4s} hole fraction over 1000 seeds: min {f.min():.3f}  mean {f.mean():.3f}  max {f.max():.3f}")

# composition keeps visible pixels and takes the rest from the generator
I = np.array([[1, 2], [3, 4]]) / 4
M = np.array([[1, 0], [1, 1]])
print(compose(I, M, np.full((2, 2), 0.9)))
