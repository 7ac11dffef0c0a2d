"""Unconditional and keypoint-conditioned GAN: training, sampling, scoring, persistence."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint
from ._util import TrainingDiverged, model_dtype, to_latent, to_nchw
from .nets import Discriminator, Generator, freeze

log = logging.getLogger(__name__)

EPS = 1e-6


@dataclass
class GanConfig:
    d: int = 64
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 64
    steps: int = 3000
    seed: int = 0
    conditional: bool = False
    g_loss: str = "nonsaturating"   # or "saturating"
    g_ch: int = 32
    d_ch: int = 16
    ema: float = 0.999      # generator weight averaging; 0 disables
    log_every: int = 0

    def __post_init__(self):
        if self.d < 1 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("d and batch_size must be >= 1, steps >= 0")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if self.g_loss not in ("nonsaturating", "saturating"):
            raise ValueError(f"unknown generator loss {self.g_loss!r}")


def sample_z(batch: int, d: int, seed=None, generator: torch.Generator | None = None,
             dtype=torch.float32) -> torch.Tensor:
    """i.i.d. U[-1, 1]^d latents, shape (batch, d)."""
    if batch < 1 or d < 1:
        raise ValueError("batch and d must be >= 1")
    if generator is None:
        generator = torch.Generator().manual_seed(int(seed or 0))
    return torch.rand(batch, d, generator=generator, dtype=dtype) * 2 - 1


def clamp_score(score: torch.Tensor) -> torch.Tensor:
    return score.clamp(EPS, 1 - EPS)


def build_models(cfg: GanConfig, size: int = 32, channels: int = 1):
    torch.manual_seed(cfg.seed)
    gen = Generator(cfg.d, cfg.g_ch, cfg.conditional, channels, size)
    disc = Discriminator(cfg.d_ch, cfg.conditional, channels, size)
    return gen, disc


def discriminator_loss(logit_real, logit_fake) -> torch.Tensor:
    """-mean(log D(x) + log(1 - D(G(z)))), computed from logits.

    Working on logits keeps the gradient alive when D saturates; clamping
    the sigmoid score would zero it and stall training for good.
    """
    return -(F.logsigmoid(logit_real) + F.logsigmoid(-logit_fake)).mean()


def generator_loss(logit_gen, kind: str = "nonsaturating") -> torch.Tensor:
    """-mean log D(G(z)) (non-saturating) or mean log(1 - D(G(z))) (saturating)."""
    if kind == "nonsaturating":
        return -F.logsigmoid(logit_gen).mean()
    return F.logsigmoid(-logit_gen).mean()


def _train(images, priors, cfg: GanConfig):
    x_all, _ = to_nchw(images)
    if len(x_all) == 0:
        raise ValueError("dataset is empty")
    c_all = None
    if cfg.conditional:
        c_all, _ = to_nchw(priors)
        if len(c_all) != len(x_all) or not torch.isfinite(c_all).all():
            raise ValueError("every sample needs a finite prior map")
    gen, disc = build_models(cfg, x_all.shape[-1], x_all.shape[1])
    gen.train()
    disc.train()
    gen_avg = copy.deepcopy(gen) if cfg.ema else gen
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g, betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d, betas=(cfg.beta1, cfg.beta2))
    rng = torch.Generator().manual_seed(cfg.seed)
    history = []
    n = len(x_all)
    for step in range(cfg.steps):
        idx = torch.randint(n, (cfg.batch_size,), generator=rng)
        x = x_all[idx]
        c = c_all[idx] if cfg.conditional else None
        # fake samples share the real batch's conditioning
        z = sample_z(cfg.batch_size, cfg.d, generator=rng)

        fake = gen(z, c)
        loss_d = discriminator_loss(disc(x, c), disc(fake.detach(), c))
        opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        opt_d.step()

        loss_g = generator_loss(disc(fake, c), cfg.g_loss)
        opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        opt_g.step()
        if cfg.ema:
            with torch.no_grad():
                for pa, p in zip(gen_avg.parameters(), gen.parameters()):
                    pa.lerp_(p, 1 - cfg.ema)

        ld, lg = loss_d.item(), loss_g.item()
        if not (np.isfinite(ld) and np.isfinite(lg)):
            raise TrainingDiverged(step)
        history.append({"step": step, "d_loss": ld, "g_loss": lg})
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("gan step %d  d %.4f  g %.4f", step, ld, lg)
    return freeze(gen_avg), freeze(disc), history


def train_gan(images, cfg: GanConfig):
    """Alternating minimax training; returns frozen (generator, discriminator, history)."""
    if cfg.conditional:
        raise ValueError("train_gan needs conditional=False; use train_cgan")
    return _train(images, None, cfg)


def train_cgan(images, priors, cfg: GanConfig):
    """Conditional training: G sees (z, c), D sees (x, c) with matched real pairs."""
    if priors is None:
        raise ValueError("train_cgan requires a prior map for every sample")
    if not cfg.conditional:
        cfg = GanConfig(**{**asdict(cfg), "conditional": True})
    return _train(images, priors, cfg)


def _check_prior(model, prior):
    if model.conditional and prior is None:
        raise ValueError("conditional model requires a prior map")
    if not model.conditional and prior is not None:
        raise ValueError("unconditional model does not accept a prior map")


def generate(gen: Generator, z, prior=None):
    """Deterministic forward pass. ``z`` is (d,) or (N, d); prior (H, W) or (N, 1, H, W)."""
    _check_prior(gen, prior)
    dtype = model_dtype(gen)
    zt, batched = to_latent(z, dtype)
    c = None
    if prior is not None:
        c, _ = to_nchw(prior, dtype)
        if len(c) == 1 and len(zt) > 1:
            c = c.expand(len(zt), -1, -1, -1)
    with torch.no_grad():
        out = gen(zt, c)
    return out if batched else out[0]


def discriminate(disc: Discriminator, image, prior=None):
    """Score(s) in (0, 1); a single image gives a 0-d tensor."""
    _check_prior(disc, prior)
    dtype = model_dtype(disc)
    x, batched = to_nchw(image, dtype)
    c = to_nchw(prior, dtype)[0] if prior is not None else None
    with torch.no_grad():
        s = clamp_score(torch.sigmoid(disc(x, c)))
    return s if batched else s[0]


def gan_arch(gen: Generator, disc: Discriminator) -> dict:
    return {"d": gen.d, "g_ch": gen.ch, "d_ch": disc.ch, "conditional": gen.conditional,
            "channels": gen.channels, "size": gen.size, "prior_depth": disc.prior_depth}


def save_gan(path, gen, disc, config: dict | None = None) -> checkpoint.CheckpointRef:
    kind = "cgan" if gen.conditional else "gan"
    return checkpoint.save(path, kind, {"generator": gen, "discriminator": disc},
                           gan_arch(gen, disc), config)


def load_gan(path, kind: str | None = None):
    manifest, arrays = checkpoint.read(path, kind)
    if manifest["kind"] not in ("gan", "cgan"):
        raise checkpoint.CheckpointError(f"{path} is not a GAN checkpoint")
    a = manifest["arch"]
    gen = Generator(a["d"], a["g_ch"], a["conditional"], a["channels"], a["size"])
    disc = Discriminator(a["d_ch"], a["conditional"], a["channels"], a["size"], a.get("prior_depth", 0))
    checkpoint.load_into({"generator": gen, "discriminator": disc}, arrays)
    return freeze(gen), freeze(disc), manifest


def gan_hash(gen, disc) -> str:
    return checkpoint.modules_hash({"generator": gen, "discriminator": disc})
