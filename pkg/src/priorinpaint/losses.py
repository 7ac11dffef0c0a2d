"""Unsupervised inpainting losses.

Every image-space term is restricted to kept pixels (mask == 1): values
inside the hole are selected away with ``torch.where`` and never enter the
result, not even as zeros multiplied by garbage.

All functions accept a single image ((H, W) or (C, H, W)) or a batch
(N, C, H, W) and return a scalar or a length-N tensor accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ._util import to_nchw
from .gan import clamp_score


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0    # contextual
    lambda2: float = 0.05   # realism
    lambda3: float = 0.2    # gradient difference

    def __post_init__(self):
        ws = (self.lambda1, self.lambda2, self.lambda3)
        if any(w < 0 for w in ws):
            raise ValueError("loss weights must be non-negative")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")


def _prepare(original, generated, mask):
    dtype = generated.dtype if isinstance(generated, torch.Tensor) and generated.is_floating_point() else torch.float64
    gen, batched = to_nchw(generated, dtype)
    orig, _ = to_nchw(original, dtype)
    keep, _ = to_nchw(mask, dtype)
    if orig.shape[1:] != gen.shape[1:]:
        raise ValueError(f"shape mismatch: {tuple(orig.shape)} vs {tuple(gen.shape)}")
    if keep.shape[-2:] != gen.shape[-2:]:
        raise ValueError(f"mask shape {tuple(keep.shape)} does not match image {tuple(gen.shape)}")
    return orig.expand(gen.shape), gen, (keep != 0).expand(gen.shape), batched


def _masked_mean(values, valid):
    total = torch.where(valid, values, torch.zeros((), dtype=values.dtype)).flatten(1).sum(1)
    count = valid.flatten(1).sum(1)
    return total / count.clamp_min(1).to(values.dtype)


def _out(v, batched):
    return v if batched else v[0]


def contextual_loss(original, generated, mask, norm: str = "l1"):
    """Mean absolute (or squared, ``norm='l2'``) error over kept pixels; 0 for an empty support."""
    orig, gen, keep, batched = _prepare(original, generated, mask)
    diff = gen - orig
    err = diff.abs() if norm == "l1" else diff.square()
    return _out(_masked_mean(err, keep), batched)


def realism_loss(disc_score):
    """``log(1 - D)`` with the score clamped to [1e-6, 1 - 1e-6]."""
    if isinstance(disc_score, torch.Tensor):
        s = disc_score
    else:
        s = torch.as_tensor(np.asarray(disc_score, dtype=np.float64))
    if not s.is_floating_point():
        s = s.to(torch.float64)
    return torch.log(1 - clamp_score(s))


def gradient_diff_loss(original, generated, mask):
    """Masked L1 between forward-difference maps.

    ``mean_x |dx I - dx G| + mean_y |dy I - dy G|`` where each mean runs over
    difference positions whose two stencil pixels are both kept.
    """
    orig, gen, keep, batched = _prepare(original, generated, mask)
    if gen.shape[-1] < 2 or gen.shape[-2] < 2:
        raise ValueError("gradient difference needs H, W >= 2")
    dx = (orig[..., :, 1:] - orig[..., :, :-1]) - (gen[..., :, 1:] - gen[..., :, :-1])
    dy = (orig[..., 1:, :] - orig[..., :-1, :]) - (gen[..., 1:, :] - gen[..., :-1, :])
    vx = keep[..., :, 1:] & keep[..., :, :-1]
    vy = keep[..., 1:, :] & keep[..., :-1, :]
    return _out(_masked_mean(dx.abs(), vx) + _masked_mean(dy.abs(), vy), batched)


def combined_loss(original, generated, mask, disc_score, w: LossWeights = LossWeights(),
                  norm: str = "l1"):
    """``lambda1 * L_c + lambda2 * L_r + lambda3 * L_g``."""
    total = 0.0
    if w.lambda1:
        total = total + w.lambda1 * contextual_loss(original, generated, mask, norm)
    if w.lambda2:
        total = total + w.lambda2 * realism_loss(disc_score)
    if w.lambda3:
        total = total + w.lambda3 * gradient_diff_loss(original, generated, mask)
    return total
