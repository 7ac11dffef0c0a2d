"""Hole masks for inpainting and the masking / composition operators.

Mask convention: ``1`` keeps a pixel, ``0`` marks it as part of the hole.
Three families are provided:

* ``RC``  random central rectangle covering a random fraction of the image
* ``RF``  random free-hand brush strokes
* ``RCh`` random checkerboard grid

Every generator is a pure function of its arguments and seed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

MASK_KINDS = ("RC", "RF", "RCh")

# Tolerance (in area fraction) within which RC rectangles may trade exact
# area for an aspect ratio closer to the drawn one.
_RC_AREA_TOL = 0.01
_RF_MAX_STROKES = 8


@dataclass(frozen=True)
class MaskSpec:
    """Reproducible description of a mask: kind, kind-specific params, seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}, expected one of {MASK_KINDS}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MaskSpec":
        raw = json.loads(text)
        return cls(kind=raw["kind"], params=raw.get("params", {}), seed=int(raw.get("seed", 0)))

    def with_seed(self, seed: int) -> "MaskSpec":
        return MaskSpec(self.kind, dict(self.params), int(seed))


DEFAULT_PARAMS = {
    "RC": {"frac_lo": 0.5, "frac_hi": 0.7},
    "RF": {"target_frac": 0.5},
    "RCh": {"target_frac": 0.5},
}


def default_spec(kind: str, seed: int = 0) -> MaskSpec:
    return MaskSpec(kind, dict(DEFAULT_PARAMS[kind]), seed)


def hole_fraction(mask) -> float:
    mask = np.asarray(mask)
    return float((mask == 0).sum()) / mask.size


def _check_dims(h, w, minimum=1):
    if int(h) != h or int(w) != w or h < minimum or w < minimum:
        raise ValueError(f"mask dimensions must be integers >= {minimum}, got {h}x{w}")


def gen_center_mask(h: int, w: int, frac_lo: float, frac_hi: float, seed: int) -> np.ndarray:
    """Centered rectangular hole whose area fraction is drawn from U[frac_lo, frac_hi].

    The aspect ratio (height / width) is drawn from U[0.75, 1.33]; among the
    integer rectangles whose area lies within 1% of the target, the one with
    the closest aspect ratio is used.
    """
    _check_dims(h, w, minimum=2)
    if not 0.0 <= frac_lo <= frac_hi <= 1.0:
        raise ValueError(f"need 0 <= frac_lo <= frac_hi <= 1, got ({frac_lo}, {frac_hi})")
    rng = np.random.default_rng(seed)
    frac = rng.uniform(frac_lo, frac_hi)
    aspect = rng.uniform(0.75, 1.33)
    target = frac * h * w

    hh = np.arange(1, h + 1)
    ww = np.clip(np.rint(target / hh), 0, w).astype(int)
    area_err = np.abs(hh * ww - target) / (h * w)
    best = area_err.min()
    ok = (area_err <= max(best, _RC_AREA_TOL)) & (ww > 0)
    mask = np.ones((h, w), dtype=np.uint8)
    if target < 0.5 or not ok.any():
        return mask
    aspect_err = np.where(ok, np.abs(np.log(hh / np.maximum(ww, 1)) - np.log(aspect)), np.inf)
    i = int(np.argmin(aspect_err))
    rh, rw = int(hh[i]), int(ww[i])
    top, left = (h - rh) // 2, (w - rw) // 2
    mask[top:top + rh, left:left + rw] = 0
    return mask


def _disk(radius: float) -> np.ndarray:
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (yy ** 2 + xx ** 2) <= radius ** 2


def _stamp(hole: np.ndarray, cy: int, cx: int, brush: np.ndarray) -> None:
    h, w = hole.shape
    r = brush.shape[0] // 2
    y0, y1 = max(cy - r, 0), min(cy + r + 1, h)
    x0, x1 = max(cx - r, 0), min(cx + r + 1, w)
    hole[y0:y1, x0:x1] |= brush[y0 - cy + r:y1 - cy + r, x0 - cx + r:x1 - cx + r]


def gen_freehand_mask(h: int, w: int, target_frac: float, seed: int,
                      max_strokes: int = _RF_MAX_STROKES) -> np.ndarray:
    """Free-hand hole painted by random-walk brush strokes.

    Strokes are laid down until the hole fraction first reaches
    ``target_frac``. Each stroke has a brush radius in [2, h/8] and a
    geometric length with mean h/2 steps. After ``max_strokes`` strokes the
    remaining area is filled by stamping next to the existing hole, so the
    hole never has more than ``max_strokes`` 8-connected components.
    """
    _check_dims(h, w, minimum=2)
    if not 0.0 < target_frac < 1.0:
        raise ValueError(f"target_frac must lie in (0, 1), got {target_frac}")
    rng = np.random.default_rng(seed)
    need = int(np.ceil(target_frac * h * w - 1e-9))
    hole = np.zeros((h, w), dtype=bool)
    r_hi = max(2.0, min(h, w) / 8)
    mean_len = max(h, w) / 2

    for _ in range(max_strokes):
        radius = rng.uniform(2.0, r_hi)
        brush = _disk(radius)
        n_steps = int(rng.geometric(1.0 / mean_len))
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        angle = rng.uniform(0, 2 * np.pi)
        step = max(1.0, radius / 2)
        for _ in range(n_steps):
            _stamp(hole, int(y), int(x), brush)
            if hole.sum() >= need:
                return (~hole).astype(np.uint8)
            angle += rng.normal(0.0, 0.6)
            y = float(np.clip(y + step * np.sin(angle), 0, h - 1))
            x = float(np.clip(x + step * np.cos(angle), 0, w - 1))

    # fill-to-target: grow the existing hole
    brush = _disk(2.0)
    while hole.sum() < need:
        padded = np.pad(hole, 1)
        grown = np.zeros_like(hole)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                grown |= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        frontier = np.argwhere(grown & ~hole)
        if len(frontier) == 0:
            # no stroke landed at all (cannot happen with >= 1 stroke)
            frontier = np.argwhere(~hole)
        cy, cx = frontier[rng.integers(len(frontier))]
        _stamp(hole, int(cy), int(cx), brush)
    return (~hole).astype(np.uint8)


def default_cell_sizes(h: int, w: int) -> tuple:
    scale = min(h, w) / 32
    return tuple(sorted({max(1, int(round(4 * scale))), max(1, int(round(8 * scale)))}))


def gen_checker_mask(h: int, w: int, target_frac: float, cell_sizes, seed: int,
                     phase=None) -> np.ndarray:
    """Checkerboard hole with a random cell size and random phase.

    Alternate cells are zeroed, which gives a 50% hole. For other targets,
    whole cells of the opposite parity are added (or dropped) at random until
    the fraction is as close to ``target_frac`` as cell granularity allows.
    ``phase`` fixes the (row, col) offset; by default it is random.
    """
    _check_dims(h, w)
    cell_sizes = sorted(set(int(c) for c in (cell_sizes or ())))
    if not cell_sizes:
        raise ValueError("cell_sizes must be non-empty")
    if any(c < 1 for c in cell_sizes):
        raise ValueError("cell sizes must be positive")
    if not 0.0 <= target_frac <= 1.0:
        raise ValueError(f"target_frac must lie in [0, 1], got {target_frac}")
    rng = np.random.default_rng(seed)
    cell = int(rng.choice(cell_sizes))
    if phase is None:
        py, px = (int(v) for v in rng.integers(0, cell, size=2))
    else:
        py, px = (int(v) % cell for v in phase)

    rows = (np.arange(h) + py) // cell
    cols = (np.arange(w) + px) // cell
    cell_id = rows[:, None] * (cols.max() + 1) + cols[None, :]
    parity = (rows[:, None] + cols[None, :]) % 2 == 0
    hole = parity.copy()

    target = target_frac * h * w
    if abs(hole.sum() - target) > 0.5 * cell * cell:
        # cells of the parity we want to flip, in random order
        flip_to = target > hole.sum()
        candidates = np.unique(cell_id[parity != flip_to])
        rng.shuffle(candidates)
        for cid in candidates:
            sel = cell_id == cid
            delta = sel.sum() if flip_to else -sel.sum()
            if abs(hole.sum() + delta - target) >= abs(hole.sum() - target):
                continue
            hole[sel] = flip_to
    return (~hole).astype(np.uint8)


def generate_mask(spec: MaskSpec, h: int, w: int) -> np.ndarray:
    """Dispatch a :class:`MaskSpec` to its generator."""
    p = {**DEFAULT_PARAMS[spec.kind], **spec.params}
    if spec.kind == "RC":
        return gen_center_mask(h, w, p["frac_lo"], p["frac_hi"], spec.seed)
    if spec.kind == "RF":
        return gen_freehand_mask(h, w, p["target_frac"], spec.seed)
    cells = p.get("cell_sizes") or default_cell_sizes(h, w)
    return gen_checker_mask(h, w, p["target_frac"], cells, spec.seed, phase=p.get("phase"))


def _check_shapes(a, b):
    if tuple(a.shape[-2:]) != tuple(b.shape[-2:]):
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if b.ndim > a.ndim:
        raise ValueError(f"mask has more dims than image: {tuple(b.shape)} vs {tuple(a.shape)}")


def _keep(mask, like):
    """Boolean keep-map broadcastable against ``like``."""
    if isinstance(like, torch.Tensor):
        return torch.as_tensor(mask, device=like.device) != 0
    return np.asarray(mask) != 0


def apply_mask(image, mask):
    """Hadamard product ``M * I``; hole pixels become exactly 0.

    Works on numpy arrays and torch tensors. The image may carry leading
    batch/channel axes; the mask broadcasts over them.
    """
    _check_shapes(image, mask)
    keep = _keep(mask, image)
    if isinstance(image, torch.Tensor):
        return torch.where(keep, image, torch.zeros((), dtype=image.dtype, device=image.device))
    image = np.asarray(image)
    return np.where(keep, image, np.zeros((), dtype=image.dtype))


def compose(original, mask, generated):
    """``M * I + (1 - M) * G``: kept pixels come from ``original`` bit-exactly."""
    _check_shapes(original, mask)
    if tuple(np.shape(original)) != tuple(np.shape(generated)):
        raise ValueError(f"shape mismatch: {tuple(np.shape(original))} vs {tuple(np.shape(generated))}")
    keep = _keep(mask, original)
    if isinstance(original, torch.Tensor) or isinstance(generated, torch.Tensor):
        original = torch.as_tensor(original)
        generated = torch.as_tensor(generated, dtype=original.dtype, device=original.device)
        return torch.where(keep, original, generated)
    original = np.asarray(original)
    return np.where(keep, original, np.asarray(generated, dtype=original.dtype))


def save_mask(path, mask, spec: MaskSpec | None = None) -> Path:
    """Write ``mask`` as an 8-bit PNG (0 = hole, 255 = keep) plus an optional JSON sidecar."""
    path = Path(path)
    grid = (np.asarray(mask) != 0).astype(np.uint8) * 255
    PILImage.fromarray(grid, mode="L").save(path)
    if spec is not None:
        path.with_suffix(".json").write_text(spec.to_json())
    return path


def load_mask(path) -> tuple:
    """Read a mask PNG and its sidecar spec (``None`` if absent)."""
    path = Path(path)
    grid = np.asarray(PILImage.open(path).convert("L"))
    sidecar = path.with_suffix(".json")
    spec = MaskSpec.from_json(sidecar.read_text()) if sidecar.exists() else None
    return (grid >= 128).astype(np.uint8), spec


class MaskSampler:
    """Draws masks from a pre-generated bank mixing the requested kinds.

    Generating free-hand masks on the fly inside a training loop is slow, so
    a fixed bank of ``bank_size`` masks per kind is drawn up front from
    seeds derived from ``seed``.
    """

    def __init__(self, h: int, w: int, kinds=MASK_KINDS, bank_size: int = 1000, seed: int = 0,
                 params: dict | None = None):
        params = params or {}
        ss = np.random.SeedSequence(seed)
        banks = []
        for kind, child in zip(kinds, ss.spawn(len(kinds))):
            seeds = child.generate_state(bank_size, dtype=np.uint32)
            spec = MaskSpec(kind, {**DEFAULT_PARAMS[kind], **params.get(kind, {})})
            banks.append(np.stack([generate_mask(spec.with_seed(int(s)), h, w) for s in seeds]))
        self.kinds = tuple(kinds)
        self.bank = torch.from_numpy(np.concatenate(banks)).float()

    def __len__(self):
        return len(self.bank)

    def sample(self, n: int, generator: torch.Generator) -> torch.Tensor:
        """Return ``n`` masks shaped (n, 1, H, W)."""
        idx = torch.randint(len(self.bank), (n,), generator=generator)
        return self.bank[idx].unsqueeze(1)
