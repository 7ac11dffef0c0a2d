"""Parametric "blob-face" images, keypoints, expression trajectories and datasets.

A face is an anti-aliased ellipse head with two dark eyes and a mouth arc.
Five keypoints are returned at their analytic positions: left eye, right eye,
left mouth corner, right mouth corner and mouth center. All coordinates are
``(x, y)`` in pixels with pixel centers at integer positions.
"""
from __future__ import annotations

import json
import shutil
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .masking import apply_mask, default_spec, generate_mask

FORMAT_VERSION = 1
N_KEYPOINTS = 5
DEFAULT_SIGMA = 2.0


# Parameter ranges at a 32x32 canvas; centers scale with the canvas.
RANGES = {
    "cx": (13.5, 17.5),
    "cy": (13.5, 17.5),
    "scale": (0.84, 1.0),       # heads fill the frame, like aligned face crops
    "head_aspect": (1.05, 1.25),
    "eye_spacing": (0.32, 0.5),
    "mouth_curvature": (-1.0, 1.0),
    "rotation": (-0.35, 0.35),
    "tone": (0.55, 0.9),
}


@dataclass(frozen=True)
class ShapeParams:
    """Pose and expression of one face.

    ``scale`` is the head's horizontal semi-axis as a fraction of half the
    canvas; ``head_aspect`` is vertical / horizontal semi-axis;
    ``eye_spacing`` is the eye offset from the midline as a fraction of the
    horizontal semi-axis. ``tone`` is the head intensity.
    """

    cx: float
    cy: float
    scale: float
    head_aspect: float
    eye_spacing: float
    mouth_curvature: float
    rotation: float
    tone: float = 0.75

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


PARAM_NAMES = tuple(f.name for f in fields(ShapeParams))


def _semi_axes(p: ShapeParams, h: int, w: int):
    a = p.scale * min(h, w) / 2
    return a, a * p.head_aspect


def _check_params(p: ShapeParams, h: int, w: int):
    if not -1.0 <= p.mouth_curvature <= 1.0:
        raise ValueError(f"mouth_curvature must lie in [-1, 1], got {p.mouth_curvature}")
    if p.scale <= 0 or p.head_aspect <= 0:
        raise ValueError("scale and head_aspect must be positive")
    # the head outline may run off the border; centre and landmarks may not
    pts = np.vstack([[p.cx, p.cy], face_keypoints(p, h, w)])
    if (pts < -0.5).any() or (pts[:, 0] > w - 0.5).any() or (pts[:, 1] > h - 0.5).any():
        raise ValueError(f"face centre or landmarks fall outside a {h}x{w} canvas: {p}")


def _local_keypoints(p: ShapeParams, h: int, w: int) -> np.ndarray:
    a, b = _semi_axes(p, h, w)
    ex, ey = p.eye_spacing * a, -0.28 * b
    mx, my = 0.45 * a, 0.42 * b
    depth = 0.16 * b * p.mouth_curvature
    return np.array([[-ex, ey], [ex, ey], [-mx, my], [mx, my], [0.0, my + depth]])


def _to_canvas(local: np.ndarray, p: ShapeParams) -> np.ndarray:
    c, s = np.cos(p.rotation), np.sin(p.rotation)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([p.cx, p.cy])


def face_keypoints(p: ShapeParams, h: int, w: int) -> np.ndarray:
    return _to_canvas(_local_keypoints(p, h, w), p)


def _coverage(sdf: np.ndarray) -> np.ndarray:
    # signed distance (px, negative inside) -> pixel coverage
    return np.clip(0.5 - sdf, 0.0, 1.0)


def render_face(params: ShapeParams, h: int = 32, w: int = 32, background: float = 0.1):
    """Rasterize a face; returns ``(image, keypoints)`` with image in [0, 1]."""
    _check_params(params, h, w)
    a, b = _semi_axes(params, h, w)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    c, s = np.cos(params.rotation), np.sin(params.rotation)
    dx, dy = xx - params.cx, yy - params.cy
    u = c * dx + s * dy          # face-local coordinates
    v = -s * dx + c * dy

    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    head = _coverage((rho - 1.0) * min(a, b))
    img = background + (params.tone - background) * head

    kp_local = _local_keypoints(params, h, w)
    eye_r = max(0.9, 0.13 * a)
    for ex, ey in kp_local[:2]:
        eye = _coverage(np.hypot(u - ex, v - ey) - eye_r)
        img = img + (0.08 - img) * eye

    (lx, my), (rx, _), (_, mc) = kp_local[2], kp_local[3], kp_local[4]
    half = rx
    t = np.clip(u / half, -1.0, 1.0)
    curve = my + (mc - my) * (1.0 - t ** 2)
    # closest-x distance outside the mouth span plus vertical distance to the arc
    along = np.maximum(np.abs(u) - half, 0.0)
    dist = np.hypot(along, v - curve)
    mouth = _coverage(dist - 0.75)
    img = img + (0.15 - img) * mouth

    kps = _to_canvas(kp_local, params)
    return np.clip(img, 0.0, 1.0), kps


def _scaled_ranges(h: int, w: int) -> dict:
    out = dict(RANGES)
    lo, hi = RANGES["cx"]
    out["cx"] = (lo * w / 32, hi * w / 32)
    lo, hi = RANGES["cy"]
    out["cy"] = (lo * h / 32, hi * h / 32)
    return out


def random_params(rng: np.random.Generator, h: int = 32, w: int = 32) -> ShapeParams:
    ranges = _scaled_ranges(h, w)
    return ShapeParams(**{k: float(rng.uniform(*ranges[k])) for k in PARAM_NAMES})


def gen_trajectory(T: int, smoothness: float, seed: int, h: int = 32, w: int = 32) -> list:
    """Smooth random walk over :class:`ShapeParams`.

    ``smoothness`` bounds the per-step change of ``mouth_curvature``; every
    other parameter moves by at most ``smoothness`` times half its range.
    Values are clipped to their ranges, which never enlarges a step.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    ranges = _scaled_ranges(h, w)
    cur = random_params(rng, h, w)
    out = [cur]
    lo = np.array([ranges[k][0] for k in PARAM_NAMES])
    hi = np.array([ranges[k][1] for k in PARAM_NAMES])
    bound = smoothness * (hi - lo) / 2
    vec = cur.as_vector()
    for _ in range(T - 1):
        step = rng.uniform(-1.0, 1.0, size=len(PARAM_NAMES)) * bound
        vec = np.clip(vec + step, lo, hi)
        out.append(ShapeParams(*map(float, vec)))
    return out


def render_prior_map(kps, sigma: float = DEFAULT_SIGMA, h: int = 32, w: int = 32) -> np.ndarray:
    """Single-channel keypoint heatmap: max of truncated Gaussians, peak-normalized.

    Gaussians are cut to zero beyond 3 sigma. An empty keypoint list gives an
    all-zero map.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kps = np.asarray(kps, dtype=np.float64).reshape(-1, 2)
    grid = np.zeros((h, w), dtype=np.float64)
    if len(kps) == 0:
        return grid
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for x, y in kps:
        d2 = (xx - x) ** 2 + (yy - y) ** 2
        g = np.exp(-d2 / (2 * sigma ** 2))
        g[d2 > (3 * sigma) ** 2] = 0.0
        np.maximum(grid, g, out=grid)
    peak = grid.max()
    return grid / peak if peak > 0 else grid


def prior_maps(kps, sigma: float = DEFAULT_SIGMA, h: int = 32, w: int = 32) -> np.ndarray:
    """Vectorized :func:`render_prior_map` over a leading batch of keypoint sets."""
    kps = np.asarray(kps, dtype=np.float64)
    flat = kps.reshape(-1, kps.shape[-2], 2)
    out = np.stack([render_prior_map(k, sigma, h, w) for k in flat])
    return out.reshape(kps.shape[:-2] + (h, w))


@dataclass
class SequenceSample:
    frames: list
    keypoints: list
    params: list


@dataclass
class SyntheticSequence:
    """One source image masked T ways."""

    source: np.ndarray
    masks: list
    masked_frames: list

    def __len__(self):
        return len(self.masks)


def render_sequence(T: int, smoothness: float, seed: int, h: int = 32, w: int = 32) -> SequenceSample:
    params = gen_trajectory(T, smoothness, seed, h, w)
    rendered = [render_face(p, h, w) for p in params]
    return SequenceSample([r[0] for r in rendered], [r[1] for r in rendered], params)


def make_synthetic_sequence(source, mask_specs) -> SyntheticSequence:
    source = np.asarray(source)
    h, w = source.shape[-2:]
    masks = [generate_mask(spec, h, w) for spec in mask_specs]
    return SyntheticSequence(source, masks, [apply_mask(source, m) for m in masks])


def synthetic_rc_sequence(source, T: int, seed: int, kind: str = "RC") -> SyntheticSequence:
    """Convenience: ``T`` masks of one kind with seeds drawn from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(T, dtype=np.uint32)
    return make_synthetic_sequence(source, [default_spec(kind, int(s)) for s in seeds])


def encode_png(image: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def decode_png(grid: np.ndarray) -> np.ndarray:
    return np.asarray(grid, dtype=np.float32) / 255.0


def save_png(path: Path, image: np.ndarray):
    PILImage.fromarray(encode_png(image), mode="L").save(path, optimize=False)


def load_png(path: Path) -> np.ndarray:
    return decode_png(np.asarray(PILImage.open(path).convert("L")))


DEFAULT_SMOOTHNESS = 0.15


def make_dataset(root, n_images: int, n_sequences: int, T: int, h: int = 32, w: int = 32,
                 seed: int = 0, smoothness: float = DEFAULT_SMOOTHNESS,
                 sigma: float = DEFAULT_SIGMA) -> Path:
    """Render and write a dataset under ``root``.

    Layout::

        images/{id}.png             single frames, id = img00000 ...
        sequences/{id}/{t:03d}.png  sequence frames, id = seq00000 ...
        keypoints/{id}.json         [[x, y], ...] for an image, or
                                    {id}_{t:03d}.json per sequence frame
        manifest.json

    The directory is assembled in a temporary sibling and renamed into place,
    so a failure never leaves a partial dataset behind.
    """
    if n_images < 0 or n_sequences < 0 or n_images + n_sequences == 0:
        raise ValueError("counts must be non-negative and not both zero")
    if n_sequences and T < 1:
        raise ValueError("T must be >= 1")
    root = Path(root)
    root.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{root.name}.", dir=root.parent))
    try:
        for sub in ("images", "sequences", "keypoints"):
            (tmp / sub).mkdir()
        ss = np.random.SeedSequence(seed)
        img_ss, seq_ss = ss.spawn(2)
        img_seeds = img_ss.generate_state(max(n_images, 1), dtype=np.uint32)[:n_images]
        seq_seeds = seq_ss.generate_state(max(n_sequences, 1), dtype=np.uint32)[:n_sequences]
        for i, s in enumerate(img_seeds):
            rng = np.random.default_rng(int(s))
            img, kps = render_face(random_params(rng, h, w), h, w)
            ident = f"img{i:05d}"
            save_png(tmp / "images" / f"{ident}.png", img)
            (tmp / "keypoints" / f"{ident}.json").write_text(json.dumps(kps.tolist()))
        for i, s in enumerate(seq_seeds):
            sample = render_sequence(T, smoothness, int(s), h, w)
            ident = f"seq{i:05d}"
            (tmp / "sequences" / ident).mkdir()
            for t, (frame, kps) in enumerate(zip(sample.frames, sample.keypoints)):
                save_png(tmp / "sequences" / ident / f"{t:03d}.png", frame)
                (tmp / "keypoints" / f"{ident}_{t:03d}.json").write_text(json.dumps(kps.tolist()))
        manifest = {
            "format_version": FORMAT_VERSION,
            "n_images": n_images,
            "n_sequences": n_sequences,
            "T": T,
            "height": h,
            "width": w,
            "channels": 1,
            "seed": seed,
            "smoothness": smoothness,
            "sigma": sigma,
            "n_keypoints": N_KEYPOINTS,
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        if root.exists():
            shutil.rmtree(root)
        tmp.rename(root)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return root


@dataclass
class Dataset:
    """In-memory view of a dataset directory.

    ``images`` is (N, H, W) float32, ``keypoints`` (N, 5, 2);
    ``sequences`` is (S, T, H, W) and ``seq_keypoints`` (S, T, 5, 2).
    """

    images: np.ndarray
    keypoints: np.ndarray
    sequences: np.ndarray
    seq_keypoints: np.ndarray
    manifest: dict

    @property
    def sigma(self) -> float:
        return float(self.manifest.get("sigma", DEFAULT_SIGMA))

    @property
    def shape(self):
        return int(self.manifest["height"]), int(self.manifest["width"])

    def priors(self) -> np.ndarray:
        return prior_maps(self.keypoints, self.sigma, *self.shape).astype(np.float32)

    def seq_priors(self) -> np.ndarray:
        return prior_maps(self.seq_keypoints, self.sigma, *self.shape).astype(np.float32)

    def subset(self, n_images=None, n_sequences=None) -> "Dataset":
        return replace(self, images=self.images[:n_images], keypoints=self.keypoints[:n_images],
                       sequences=self.sequences[:n_sequences],
                       seq_keypoints=self.seq_keypoints[:n_sequences])


def validate_manifest(root) -> dict:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    for key in ("format_version", "n_images", "n_sequences", "T", "height", "width", "seed"):
        if key not in manifest:
            raise ValueError(f"manifest missing {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format {manifest['format_version']}")
    n_img = len(list((root / "images").glob("*.png")))
    n_seq = len([p for p in (root / "sequences").iterdir() if p.is_dir()])
    if n_img != manifest["n_images"] or n_seq != manifest["n_sequences"]:
        raise ValueError("manifest counts do not match files on disk")
    return manifest


def load_dataset(root) -> Dataset:
    root = Path(root)
    m = validate_manifest(root)
    h, w, T = m["height"], m["width"], m["T"]

    def kp(name):
        return np.asarray(json.loads((root / "keypoints" / f"{name}.json").read_text()), dtype=np.float64)

    ids = [f"img{i:05d}" for i in range(m["n_images"])]
    images = np.stack([load_png(root / "images" / f"{i}.png") for i in ids]) if ids else np.zeros((0, h, w), np.float32)
    kps = np.stack([kp(i) for i in ids]) if ids else np.zeros((0, N_KEYPOINTS, 2))
    sids = [f"seq{i:05d}" for i in range(m["n_sequences"])]
    if sids:
        seqs = np.stack([np.stack([load_png(root / "sequences" / s / f"{t:03d}.png") for t in range(T)])
                         for s in sids])
        seq_kps = np.stack([np.stack([kp(f"{s}_{t:03d}") for t in range(T)]) for s in sids])
    else:
        seqs = np.zeros((0, T, h, w), np.float32)
        seq_kps = np.zeros((0, T, N_KEYPOINTS, 2))
    return Dataset(images, kps, seqs, seq_kps, m)


__all__ = [
    "ShapeParams", "render_face", "face_keypoints", "gen_trajectory", "render_prior_map",
    "prior_maps", "make_dataset", "load_dataset", "Dataset", "SequenceSample",
    "SyntheticSequence", "make_synthetic_sequence", "synthetic_rc_sequence", "random_params",
    "validate_manifest", "save_png", "load_png", "encode_png", "decode_png",
]
