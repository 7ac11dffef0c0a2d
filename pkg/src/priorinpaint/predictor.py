"""Learned noise-prior predictor: one forward pass from a masked image to a latent.

The predictor is trained against a frozen GAN with the combined contextual,
realism and gradient-difference loss, using freshly masked training images.
Only kept pixels of the training images are ever read.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import checkpoint
from ._util import TrainingDiverged, model_dtype, to_nchw
from .gan import clamp_score, gan_hash
from .losses import LossWeights, combined_loss
from .masking import MASK_KINDS, MaskSampler, apply_mask, compose
from .nets import Predictor, freeze

log = logging.getLogger(__name__)


@dataclass
class PredictorConfig:
    lr: float = 1e-3
    batch_size: int = 64
    steps: int = 3000
    seed: int = 0
    ch: int = 16
    weights: LossWeights = field(default_factory=LossWeights)
    mask_kinds: tuple = MASK_KINDS
    mask_bank: int = 1000
    norm: str = "l1"
    log_every: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mask_kinds"] = list(self.mask_kinds)
        return out


def _check_prior(model, prior):
    if model.conditional and prior is None:
        raise ValueError("conditional predictor requires a prior map")
    if not model.conditional and prior is not None:
        raise ValueError("unconditional predictor does not accept a prior map")


def frame_losses(gen, disc, originals, masks, z, priors=None, w=LossWeights(), norm="l1"):
    """Per-sample combined loss of latents ``z`` for (N, C, H, W) originals."""
    fake = gen(z, priors)
    score = clamp_score(torch.sigmoid(disc(fake, priors)))
    return combined_loss(originals, fake, masks, score, w, norm), fake


def batch_losses(pred, gen, disc, originals, masks, priors=None, w=LossWeights(), norm="l1"):
    """Predict latents from masked originals and score them; returns (losses, z)."""
    damaged = apply_mask(originals, masks)
    z = pred(damaged, masks, priors)
    losses, _ = frame_losses(gen, disc, originals, masks, z, priors, w, norm)
    return losses, z


def train_predictor(gen, disc, images, mask_sampler: MaskSampler | None = None,
                    w: LossWeights | None = None, cfg: PredictorConfig | None = None, priors=None):
    """Fit a predictor against a frozen (gen, disc) pair; returns (predictor, history).

    The GAN parameter hash is checked before and after; any change raises.
    """
    cfg = cfg or PredictorConfig()
    w = w or cfg.weights
    x_all, _ = to_nchw(images)
    if len(x_all) == 0:
        raise ValueError("dataset is empty")
    conditional = gen.conditional
    c_all = None
    if conditional:
        if priors is None:
            raise ValueError("conditional GAN requires prior maps for training")
        c_all, _ = to_nchw(priors)
    size = x_all.shape[-1]
    if mask_sampler is None:
        mask_sampler = MaskSampler(x_all.shape[-2], size, cfg.mask_kinds, cfg.mask_bank, cfg.seed)

    freeze(gen)
    freeze(disc)
    before = gan_hash(gen, disc)
    torch.manual_seed(cfg.seed)
    pred = Predictor(gen.d, cfg.ch, conditional, x_all.shape[1], size)
    opt = torch.optim.Adam(pred.parameters(), lr=cfg.lr)
    rng = torch.Generator().manual_seed(cfg.seed)
    history = []
    for step in range(cfg.steps):
        idx = torch.randint(len(x_all), (cfg.batch_size,), generator=rng)
        masks = mask_sampler.sample(cfg.batch_size, rng)
        c = c_all[idx] if conditional else None
        losses, _ = batch_losses(pred, gen, disc, x_all[idx], masks, c, w, cfg.norm)
        loss = losses.mean()
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(step)
        history.append({"step": step, "loss": value})
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("predictor step %d  loss %.4f", step, value)
    if gan_hash(gen, disc) != before:
        raise RuntimeError("GAN parameters changed during predictor training")
    return freeze(pred), history


def predict_z(pred: Predictor, damaged, mask, prior=None):
    """Latent for a masked image; (d,) for a single image, (N, d) for a batch."""
    _check_prior(pred, prior)
    dtype = model_dtype(pred)
    x, batched = to_nchw(damaged, dtype)
    m, _ = to_nchw(mask, dtype)
    m = m.expand(len(x), 1, -1, -1) if len(m) == 1 else m
    c = to_nchw(prior, dtype)[0] if prior is not None else None
    with torch.no_grad():
        z = pred(apply_mask(x, m), m, c)
    return z if batched else z[0]


def inpaint(pred: Predictor, gen, original, mask, prior=None):
    """Single-pass inpainting; returns (composed image, latent used).

    One predictor forward and one generator forward. Kept pixels of the
    output are bit-identical to ``original``.
    """
    if pred.d != gen.d or pred.conditional != gen.conditional:
        raise ValueError("predictor and generator are incompatible (latent size or conditioning)")
    _check_prior(pred, prior)
    dtype = model_dtype(gen)
    x, batched = to_nchw(original, dtype)
    m, _ = to_nchw(mask, dtype)
    m = m.expand(len(x), 1, -1, -1) if len(m) == 1 else m
    c = to_nchw(prior, dtype)[0] if prior is not None else None
    with torch.no_grad():
        z = pred(apply_mask(x, m), m, c)
        out = compose(x, m, gen(z, c))
    return (out, z) if batched else (out[0], z[0])


def predictor_arch(pred: Predictor) -> dict:
    return {"d": pred.d, "ch": pred.ch, "conditional": pred.conditional,
            "channels": pred.channels, "size": pred.size}


def save_predictor(path, pred: Predictor, gen, disc, config: dict | None = None):
    return checkpoint.save(path, "predictor", {"predictor": pred}, predictor_arch(pred), config,
                           extra={"gan_hash": gan_hash(gen, disc)})


def load_predictor(path, gen=None, disc=None):
    """Load a predictor; with (gen, disc) given, verify the pinned GAN hash."""
    manifest, arrays = checkpoint.read(path, "predictor")
    if gen is not None and disc is not None and gan_hash(gen, disc) != manifest["gan_hash"]:
        raise checkpoint.CheckpointError(f"{path} was trained against a different GAN")
    a = manifest["arch"]
    pred = Predictor(a["d"], a["ch"], a["conditional"], a["channels"], a["size"])
    checkpoint.load_into({"predictor": pred}, arrays)
    return freeze(pred), manifest
