"""Small convolutional networks used by the GAN, the prior predictor and the sequence model."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def _pool_to(prior: torch.Tensor, size: int) -> torch.Tensor:
    if prior.shape[-1] == size:
        return prior
    return F.adaptive_avg_pool2d(prior, size)


class Generator(nn.Module):
    """z (and optionally a prior map) -> image in [0, 1].

    ``z`` is projected to a 2x2 grid and upsampled through four transposed
    convolutions. A conditional generator concatenates the prior map,
    average-pooled to the current resolution, to the input of every stage.
    """

    def __init__(self, d: int = 64, ch: int = 32, conditional: bool = False,
                 channels: int = 1, size: int = 32):
        super().__init__()
        if size % 16:
            raise ValueError("image size must be a multiple of 16")
        self.d, self.ch, self.conditional = d, ch, conditional
        self.channels, self.size = channels, size
        self.base = size // 16
        extra = 1 if conditional else 0
        widths = [4 * ch, 2 * ch, ch, ch // 2]
        self.project = nn.Linear(d, widths[0] * self.base * self.base)
        self.stages = nn.ModuleList()
        for i, w_in in enumerate(widths):
            w_out = widths[i + 1] if i + 1 < len(widths) else channels
            self.stages.append(nn.ConvTranspose2d(w_in + extra, w_out, 4, 2, 1))

    @property
    def out_shape(self):
        return (self.channels, self.size, self.size)

    def forward(self, z, prior=None):
        h = F.leaky_relu(self.project(z), 0.2).view(z.shape[0], -1, self.base, self.base)
        for i, stage in enumerate(self.stages):
            if self.conditional:
                h = torch.cat([h, _pool_to(prior, h.shape[-1])], dim=1)
            h = stage(h)
            if i + 1 < len(self.stages):
                h = F.leaky_relu(h, 0.2)
        return torch.sigmoid(h)


class ConvTrunk(nn.Module):
    """Four stride-2 convolutions followed by a linear read-out.

    ``side_channels`` extra input maps (pooled to the current resolution) can
    join the features before conv number ``side_at``; 0 means at the input.
    """

    def __init__(self, in_channels: int, out_features: int, ch: int = 16, size: int = 32,
                 side_channels: int = 0, side_at: int = 0):
        super().__init__()
        widths = [ch, 2 * ch, 4 * ch, 8 * ch]
        if not 0 <= side_at < len(widths):
            raise ValueError(f"side_at must be in [0, {len(widths)})")
        self.side_at = side_at
        layers, w_in = [], in_channels
        for i, w_out in enumerate(widths):
            if i == side_at:
                w_in += side_channels
            layers += [nn.Conv2d(w_in, w_out, 4, 2, 1), nn.LeakyReLU(0.2)]
            w_in = w_out
        self.convs = nn.Sequential(*layers)
        self.head = nn.Linear(widths[-1] * (size // 16) ** 2, out_features)

    def forward(self, x, side=None):
        if side is None:
            return self.head(self.convs(x).flatten(1))
        cut = 2 * self.side_at
        h = self.convs[:cut](x)
        h = torch.cat([h, _pool_to(side, h.shape[-1])], dim=1)
        return self.head(self.convs[cut:](h).flatten(1))


class Discriminator(nn.Module):
    """Image (and optionally a prior map) -> real/fake logit.

    The prior joins after ``prior_depth`` image-only convolutions. Fed at the
    input, it lets D judge fakes by landmark alignment alone, and the
    generator then drifts into speckle that D no longer penalises.
    """

    def __init__(self, ch: int = 16, conditional: bool = False, channels: int = 1, size: int = 32,
                 prior_depth: int = 2):
        super().__init__()
        self.ch, self.conditional, self.channels, self.size = ch, conditional, channels, size
        self.prior_depth = prior_depth if conditional else 0
        self.trunk = ConvTrunk(channels, 1, ch, size, 1 if conditional else 0, self.prior_depth)

    def forward(self, x, prior=None):
        return self.trunk(x, prior if self.conditional else None).squeeze(1)


class Predictor(nn.Module):
    """Masked image (+ mask channel, + optional prior map) -> z in [-1, 1]^d."""

    def __init__(self, d: int = 64, ch: int = 16, conditional: bool = False,
                 channels: int = 1, size: int = 32):
        super().__init__()
        self.d, self.ch, self.conditional, self.channels, self.size = d, ch, conditional, channels, size
        self.trunk = ConvTrunk(channels + 1 + (1 if conditional else 0), d, ch, size)

    def features(self, damaged, mask, prior=None):
        parts = [damaged, mask]
        if self.conditional:
            parts.append(prior)
        return self.trunk(torch.cat(parts, dim=1))

    def forward(self, damaged, mask, prior=None):
        return torch.tanh(self.features(damaged, mask, prior))


class SeqPredictor(nn.Module):
    """Per-frame conv encoder -> LSTM cell -> linear head -> z in [-1, 1]^d.

    The recurrence runs over the frames of one window; the hidden state
    starts at zero for every window.
    """

    def __init__(self, d: int = 64, hidden: int = 128, window: int = 4, ch: int = 16,
                 conditional: bool = False, channels: int = 1, size: int = 32):
        super().__init__()
        self.d, self.hidden, self.window, self.ch = d, hidden, window, ch
        self.conditional, self.channels, self.size = conditional, channels, size
        self.encoder = ConvTrunk(channels + 1 + (1 if conditional else 0), d, ch, size)
        self.cell = nn.LSTMCell(d, hidden)
        self.head = nn.Linear(hidden, d)

    def forward(self, damaged, masks, priors=None):
        """Inputs are (B, W, C, H, W); returns (B, W, d)."""
        b, n = damaged.shape[:2]
        parts = [damaged, masks] + ([priors] if self.conditional else [])
        x = torch.cat(parts, dim=2).flatten(0, 1)
        feats = self.encoder(x).view(b, n, -1)
        h = feats.new_zeros(b, self.hidden)
        c = feats.new_zeros(b, self.hidden)
        out = []
        for k in range(n):
            h, c = self.cell(feats[:, k], (h, c))
            out.append(torch.tanh(self.head(h)))
        return torch.stack(out, dim=1)


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module
