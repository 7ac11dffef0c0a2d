"""Grouped noise priors for frame sequences.

A conv encoder turns each masked frame of a window into a feature vector, an
LSTM cell runs over the window in order, and a linear head maps every hidden
state to that frame's latent. Training minimizes the window-averaged combined
loss plus ``lambda4`` times the mean squared pairwise latent distance inside
the window.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np
import torch

from . import checkpoint
from ._util import TrainingDiverged, model_dtype
from .gan import clamp_score, gan_hash
from .losses import LossWeights, combined_loss
from .masking import MASK_KINDS, MaskSampler, apply_mask, compose
from .nets import SeqPredictor, freeze

log = logging.getLogger(__name__)


@dataclass
class SeqConfig:
    window: int = 4
    lambda4: float = 0.1
    lr: float = 1e-3
    steps: int = 3000
    seed: int = 0
    batch_size: int = 16        # windows per step
    hidden: int = 128
    ch: int = 16
    weights: LossWeights = field(default_factory=LossWeights)
    mask_kinds: tuple = MASK_KINDS
    mask_bank: int = 1000
    norm: str = "l1"
    log_every: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.lambda4 < 0:
            raise ValueError("lambda4 must be non-negative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mask_kinds"] = list(self.mask_kinds)
        return out


def _frames(x, dtype):
    """Coerce frames to (B, W, C, H, W'); returns tensor and whether a batch axis was given."""
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x).to(dtype)
    if t.ndim == 3:          # (W, H, W')
        return t[None, :, None], False
    if t.ndim == 4:          # (W, C, H, W')
        return t[None], False
    if t.ndim == 5:
        return t, True
    raise ValueError(f"expected window frames of rank 3-5, got shape {tuple(t.shape)}")


def _check_prior(model, priors):
    if model.conditional and priors is None:
        raise ValueError("conditional sequence model requires prior maps")
    if not model.conditional and priors is not None:
        raise ValueError("unconditional sequence model does not accept prior maps")


def predict_group_z(model: SeqPredictor, damaged_frames, masks, priors=None, strict: bool = True):
    """Latents for one window of masked frames: (W, d), or (B, W, d) for a batch of windows."""
    _check_prior(model, priors)
    dtype = model_dtype(model)
    x, batched = _frames(damaged_frames, dtype)
    m, _ = _frames(masks, dtype)
    m = m.expand(x.shape[0], -1, -1, -1, -1) if m.shape[0] == 1 else m
    if strict and x.shape[1] != model.window:
        raise ValueError(f"expected a window of {model.window} frames, got {x.shape[1]}")
    if m.shape[1] != x.shape[1]:
        raise ValueError("one mask per frame is required")
    c = _frames(priors, dtype)[0] if priors is not None else None
    with torch.no_grad():
        z = model(apply_mask(x, m), m, c)
    return z if batched else z[0]


def grouped_loss(originals, generated, masks, disc_scores, w: LossWeights = LossWeights(), norm="l1"):
    """Mean over the W frames of the per-frame combined loss."""
    n = len(originals)
    if not (len(generated) == len(masks) == len(disc_scores) == n) or n == 0:
        raise ValueError("originals, generated, masks and scores need the same non-zero length")
    per = [combined_loss(originals[i], generated[i], masks[i], disc_scores[i], w, norm) for i in range(n)]
    return sum(per) / n


def subsequence_loss(zs):
    """Mean over unordered pairs of squared Euclidean latent distance; 0 for a single latent.

    ``zs`` is (W, d) or (B, W, d); the result is a scalar or a length-B tensor.
    """
    z = torch.as_tensor(zs)
    if not z.is_floating_point():
        z = z.to(torch.float64)
    batched = z.ndim == 3
    if not batched:
        z = z[None]
    n = z.shape[1]
    if n < 2:
        out = z.new_zeros(z.shape[0])
    else:
        diff = z[:, :, None, :] - z[:, None, :, :]
        out = diff.square().sum(-1).sum((1, 2)) / 2 / comb(n, 2)
    return out if batched else out[0]


def sequence_total_loss(grouped, ss, lambda4: float):
    if lambda4 < 0:
        raise ValueError("lambda4 must be non-negative")
    return grouped + lambda4 * ss if lambda4 else grouped


def window_losses(model, gen, disc, originals, masks, priors=None, w=LossWeights(), lambda4=0.0,
                  norm="l1"):
    """Per-window (total, grouped, subsequence, z) for (B, W, C, H, W) inputs."""
    b, n = originals.shape[:2]
    damaged = apply_mask(originals, masks)
    z = model(damaged, masks, priors)
    flat = lambda t: None if t is None else t.flatten(0, 1)
    fake = gen(z.flatten(0, 1), flat(priors))
    score = clamp_score(torch.sigmoid(disc(fake, flat(priors))))
    per = combined_loss(flat(originals), fake, flat(masks), score, w, norm).view(b, n)
    grouped = per.mean(1)
    ss = subsequence_loss(z)
    return sequence_total_loss(grouped, ss, lambda4), grouped, ss, z


def train_sequence(gen, disc, sequences, mask_sampler: MaskSampler | None = None,
                   w: LossWeights | None = None, cfg: SeqConfig | None = None, seq_priors=None):
    """Fit the recurrent grouped predictor on stride-1 windows of ``sequences`` (S, T, [C,] H, W)."""
    cfg = cfg or SeqConfig()
    w = w or cfg.weights
    seqs = torch.as_tensor(np.asarray(sequences), dtype=torch.float32)
    if seqs.ndim == 4:
        seqs = seqs[:, :, None]
    s_count, t_len = seqs.shape[:2]
    if s_count == 0 or t_len < cfg.window:
        raise ValueError("need at least one sequence as long as the window")
    conditional = gen.conditional
    pri = None
    if conditional:
        if seq_priors is None:
            raise ValueError("conditional GAN requires prior maps for training")
        pri = torch.as_tensor(np.asarray(seq_priors), dtype=torch.float32)
        if pri.ndim == 4:
            pri = pri[:, :, None]
    h, wd = seqs.shape[-2:]
    if mask_sampler is None:
        mask_sampler = MaskSampler(h, wd, cfg.mask_kinds, cfg.mask_bank, cfg.seed)

    freeze(gen)
    freeze(disc)
    before = gan_hash(gen, disc)
    torch.manual_seed(cfg.seed)
    model = SeqPredictor(gen.d, cfg.hidden, cfg.window, cfg.ch, conditional, seqs.shape[2], wd)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = torch.Generator().manual_seed(cfg.seed)
    n_starts = t_len - cfg.window + 1
    offsets = torch.arange(cfg.window)
    history = []
    for step in range(cfg.steps):
        si = torch.randint(s_count, (cfg.batch_size,), generator=rng)
        t0 = torch.randint(n_starts, (cfg.batch_size,), generator=rng)
        ti = t0[:, None] + offsets
        x = seqs[si[:, None], ti]
        c = pri[si[:, None], ti] if conditional else None
        masks = mask_sampler.sample(cfg.batch_size * cfg.window, rng).view(
            cfg.batch_size, cfg.window, 1, h, wd)
        total, grouped, ss, _ = window_losses(model, gen, disc, x, masks, c, w, cfg.lambda4, cfg.norm)
        loss = total.mean()
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(step)
        history.append({"step": step, "loss": value, "grouped": grouped.mean().item(),
                        "subsequence": ss.mean().item()})
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("sequence step %d  loss %.4f  ss %.4f", step, value, history[-1]["subsequence"])
    if gan_hash(gen, disc) != before:
        raise RuntimeError("GAN parameters changed during sequence training")
    return freeze(model), history


def inpaint_sequence(model: SeqPredictor, gen, frames, masks, priors=None):
    """Inpaint T frames in consecutive non-overlapping windows; returns (T, C, H, W) and (T, d)."""
    _check_prior(model, priors)
    if model.d != gen.d or model.conditional != gen.conditional:
        raise ValueError("sequence model and generator are incompatible")
    dtype = model_dtype(gen)
    x, _ = _frames(frames, dtype)
    m, _ = _frames(masks, dtype)
    x, m = x[0], m[0]
    if x.shape[0] < 1 or m.shape != (x.shape[0], 1) + x.shape[2:]:
        raise ValueError(f"frames {tuple(x.shape)} and masks {tuple(m.shape)} do not match")
    c = _frames(priors, dtype)[0][0] if priors is not None else None
    outs, zs = [], []
    with torch.no_grad():
        for start in range(0, x.shape[0], model.window):
            sl = slice(start, start + model.window)
            win_c = c[sl][None] if c is not None else None
            z = model(apply_mask(x[sl], m[sl])[None], m[sl][None], win_c)[0]
            outs.append(compose(x[sl], m[sl], gen(z, c[sl] if c is not None else None)))
            zs.append(z)
    return torch.cat(outs), torch.cat(zs)


def inpaint_sequence_batch(model: SeqPredictor, gen, frames, masks, priors=None):
    """Vectorized :func:`inpaint_sequence` over a batch: (B, T, C, H, W) in and out."""
    dtype = model_dtype(gen)
    x = torch.as_tensor(frames, dtype=dtype)
    m = torch.as_tensor(masks, dtype=dtype)
    c = torch.as_tensor(priors, dtype=dtype) if priors is not None else None
    outs = []
    with torch.no_grad():
        for start in range(0, x.shape[1], model.window):
            sl = slice(start, start + model.window)
            wc = c[:, sl] if c is not None else None
            z = model(apply_mask(x[:, sl], m[:, sl]), m[:, sl], wc)
            b, n = z.shape[:2]
            fake = gen(z.flatten(0, 1), wc.flatten(0, 1) if wc is not None else None)
            outs.append(compose(x[:, sl], m[:, sl], fake.view(b, n, *fake.shape[1:])))
    return torch.cat(outs, dim=1)


def seq_arch(model: SeqPredictor) -> dict:
    return {"d": model.d, "hidden": model.hidden, "window": model.window, "ch": model.ch,
            "conditional": model.conditional, "channels": model.channels, "size": model.size}


def save_sequence(path, model: SeqPredictor, gen, disc, config: dict | None = None, lambda4=None):
    extra = {"gan_hash": gan_hash(gen, disc), "window": model.window, "hidden": model.hidden,
             "lambda4": lambda4 if lambda4 is not None else (config or {}).get("lambda4")}
    return checkpoint.save(path, "sequence", {"sequence": model}, seq_arch(model), config, extra)


def load_sequence(path, gen=None, disc=None):
    manifest, arrays = checkpoint.read(path, "sequence")
    if gen is not None and disc is not None and gan_hash(gen, disc) != manifest["gan_hash"]:
        raise checkpoint.CheckpointError(f"{path} was trained against a different GAN")
    a = manifest["arch"]
    model = SeqPredictor(a["d"], a["hidden"], a["window"], a["ch"], a["conditional"], a["channels"], a["size"])
    checkpoint.load_into({"sequence": model}, arrays)
    return freeze(model), manifest
