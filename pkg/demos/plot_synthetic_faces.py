"""
Synthetic faces, keypoints and prior maps
=========================================

Faces are rendered from a handful of shape parameters. Each comes with five
keypoints (eyes, mouth corners, mouth centre) and a Gaussian heatmap of them,
the structural prior used by the conditional models. Sequences are smooth
random walks in parameter space.
"""
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from priorinpaint.synthetic import random_params, render_face, render_prior_map, render_sequence

out = os.environ.get("DEMO_OUT", "demo_out")
os.makedirs(out, exist_ok=True)

rng = np.random.default_rng(1)
fig, axes = plt.subplots(2, 4, figsize=(7, 3.6))
for j in range(4):
    img, kps = render_face(random_params(rng))
    axes[0, j].imshow(img, cmap="gray", vmin=0, vmax=1)
    axes[0, j].plot(kps[:, 0], kps[:, 1], "r.", ms=3)
    axes[1, j].imshow(render_prior_map(kps), cmap="magma")
    for ax in axes[:, j]:
        ax.axis("off")
fig.tight_layout()
fig.savefig(f"{out}/faces.png", dpi=120)

# a short clip: the mouth drifts by at most `smoothness` per frame
seq = render_sequence(8, smoothness=0.15, seed=3)
curv = [p.mouth_curvature for p in seq.params]
print("mouth curvature per frame:", np.round(curv, 3))
print("largest step:", np.abs(np.diff(curv)).max())
fig, axes = plt.subplots(1, 8, figsize=(9, 1.4))
for ax, f in zip(axes, seq.frames):
    ax.imshow(f, cmap="gray", vmin=0, vmax=1)
    ax.axis("off")
fig.savefig(f"{out}/sequence.png", dpi=120)
