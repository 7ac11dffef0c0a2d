from __future__ import annotations

import numpy as np
import torch


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; ``step`` is the offending step index."""

    def __init__(self, step: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


class OptimizationError(RuntimeError):
    """Non-finite loss during per-image latent optimization."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration


def to_nchw(x, dtype=torch.float32):
    """Coerce an image-like input to (N, C, H, W).

    2-D inputs are a single grayscale image, 3-D a single (C, H, W) image and
    4-D a batch. Returns the tensor and whether the input was already batched.
    """
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x)
    if not t.is_floating_point() or dtype is not None:
        t = t.to(dtype if dtype is not None else torch.float32)
    if t.ndim == 2:
        return t[None, None], False
    if t.ndim == 3:
        return t[None], False
    if t.ndim == 4:
        return t, True
    raise ValueError(f"expected a 2-D, 3-D or 4-D image, got shape {tuple(t.shape)}")


def to_latent(z, dtype=torch.float32):
    t = torch.as_tensor(np.asarray(z) if not isinstance(z, torch.Tensor) else z).to(dtype)
    if t.ndim == 1:
        return t[None], False
    if t.ndim == 2:
        return t, True
    raise ValueError(f"expected a latent of shape (d,) or (N, d), got {tuple(t.shape)}")


def model_dtype(module) -> torch.dtype:
    return next(module.parameters()).dtype
