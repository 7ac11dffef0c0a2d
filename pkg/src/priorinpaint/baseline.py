"""Per-image iterative latent search (the slow baseline the predictor replaces).

Starting from ``z ~ U[-1, 1]^d``, momentum gradient descent on the same
combined loss the predictor is trained with; ``z`` is projected back into
the cube after every step and the best iterate seen is returned.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ._util import OptimizationError, model_dtype, to_nchw
from .gan import sample_z
from .losses import LossWeights
from .masking import compose
from .predictor import frame_losses

DEFAULT_ITERS = 1500
DEFAULT_STEP = 0.01
DEFAULT_MOMENTUM = 0.9


@dataclass
class OptimTrace:
    losses: list
    best_so_far: list
    iterations: int
    wall_time: float
    z: list

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "OptimTrace":
        return cls(**json.loads(text))


def optimize_z_batch(gen, disc, originals, masks, iters: int = DEFAULT_ITERS,
                     step: float = DEFAULT_STEP, w: LossWeights = LossWeights(), seed: int = 0,
                     priors=None, momentum: float = DEFAULT_MOMENTUM, z0=None, norm: str = "l1"):
    """Optimize one latent per image of an (N, C, H, W) batch.

    Latents do not interact: the summed loss has block-diagonal gradients.
    Returns ``(best_z, fake_at_best, losses, best_so_far)`` where the last
    two are (iters, N) arrays.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    dtype = model_dtype(gen)
    x, _ = to_nchw(originals, dtype)
    m, _ = to_nchw(masks, dtype)
    m = m.expand(len(x), 1, -1, -1) if len(m) == 1 else m
    c = to_nchw(priors, dtype)[0] if priors is not None else None
    n = len(x)
    z = sample_z(n, gen.d, seed, dtype=dtype) if z0 is None else torch.as_tensor(z0, dtype=dtype).clone()
    velocity = torch.zeros_like(z)
    best_z, best_fake = z.clone(), None
    best = torch.full((n,), float("inf"), dtype=dtype)
    losses = np.empty((iters, n))
    best_hist = np.empty((iters, n))
    for it in range(iters):
        last = it == iters - 1
        zk = z.detach().requires_grad_(not last)
        with torch.set_grad_enabled(not last):
            per, fake = frame_losses(gen, disc, x, m, zk, c, w, norm)
        vals = per.detach()
        if not torch.isfinite(vals).all():
            raise OptimizationError(it)
        better = vals < best
        best = torch.where(better, vals, best)
        best_z[better] = zk.detach()[better]
        best_fake = fake.detach().clone() if best_fake is None else torch.where(
            better[:, None, None, None], fake.detach(), best_fake)
        losses[it] = vals.numpy()
        best_hist[it] = best.numpy()
        if last:
            break
        (grad,) = torch.autograd.grad(per.sum(), zk)
        velocity = momentum * velocity - step * grad
        z = (z + velocity).clamp(-1.0, 1.0)
    return best_z, best_fake, losses, best_hist


def optimize_z(gen, disc, original, mask, iters: int = DEFAULT_ITERS, step: float = DEFAULT_STEP,
               w: LossWeights = LossWeights(), seed: int = 0, prior=None,
               momentum: float = DEFAULT_MOMENTUM):
    """Single-image latent search; returns ``(z_hat, OptimTrace)``."""
    t0 = time.perf_counter()
    z, _, losses, best = optimize_z_batch(gen, disc, original, mask, iters, step, w, seed, prior, momentum)
    elapsed = time.perf_counter() - t0
    trace = OptimTrace(losses[:, 0].tolist(), best[:, 0].tolist(), iters, elapsed, z[0].tolist())
    return z[0], trace


def inpaint_iterative(gen, disc, original, mask, iters: int = DEFAULT_ITERS,
                      step: float = DEFAULT_STEP, w: LossWeights = LossWeights(), seed: int = 0,
                      prior=None, momentum: float = DEFAULT_MOMENTUM):
    """Compose the best iterate's generated image into the original; returns (image, trace)."""
    t0 = time.perf_counter()
    x, batched = to_nchw(original, model_dtype(gen))
    z, fake, losses, best = optimize_z_batch(gen, disc, x, mask, iters, step, w, seed, prior, momentum)
    m, _ = to_nchw(mask, x.dtype)
    out = compose(x, m.expand(len(x), 1, -1, -1), fake)
    elapsed = time.perf_counter() - t0
    trace = OptimTrace(losses[:, 0].tolist(), best[:, 0].tolist(), iters, elapsed, z[0].tolist())
    return (out if batched else out[0]), trace


def inpaint_iterative_batch(gen, disc, originals, masks, iters: int = DEFAULT_ITERS,
                            step: float = DEFAULT_STEP, w: LossWeights = LossWeights(),
                            seed: int = 0, priors=None, momentum: float = DEFAULT_MOMENTUM):
    """Batched evaluation helper: (N, C, H, W) in, (composed, best_z) out."""
    x, _ = to_nchw(originals, model_dtype(gen))
    m, _ = to_nchw(masks, x.dtype)
    m = m.expand(len(x), 1, -1, -1) if len(m) == 1 else m
    z, fake, _, _ = optimize_z_batch(gen, disc, x, m, iters, step, w, seed, priors, momentum)
    return compose(x, m, fake), z
