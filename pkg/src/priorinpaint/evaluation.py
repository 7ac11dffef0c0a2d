"""Metrics, the speedup benchmark and the method ablation report.

PSNR uses peak 1.0 and is capped (default 100 dB) so that identical frames
give a finite value. Temporal consistency of a synthetic sequence is the mean
PSNR over all unordered pairs of its inpainted frames; higher is better.
"""
from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import torch

from .baseline import inpaint_iterative, inpaint_iterative_batch
from .losses import LossWeights
from .masking import default_spec, generate_mask
from .predictor import inpaint
from .sequence import inpaint_sequence_batch
from .synthetic import prior_maps

REPORT_VERSION = 1
METHODS = ("iterative", "M1", "M2", "M3", "M4", "M5")


def _np(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy().astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _psnr_from_mse(mse, peak, cap):
    mse = np.asarray(mse, dtype=np.float64)
    floor = peak ** 2 * 10 ** (-cap / 10)
    with np.errstate(divide="ignore"):
        val = 10 * np.log10(peak ** 2 / np.maximum(mse, floor))
    return np.where(mse < floor, cap, val)


def psnr(a, b, peak: float = 1.0, cap: float = 100.0, where=None) -> float:
    """``10 log10(peak^2 / MSE)``; ``cap`` when MSE < peak^2 10^(-cap/10).

    ``where`` optionally restricts the MSE to a boolean pixel selection.
    """
    a, b = _np(a), _np(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if where is not None:
        sel = np.broadcast_to(np.asarray(where, dtype=bool), sq.shape)
        mse = sq[sel].mean() if sel.any() else 0.0
    else:
        mse = sq.mean()
    return float(_psnr_from_mse(mse, peak, cap))


def psnr_batch(a, b, peak: float = 1.0, cap: float = 100.0) -> np.ndarray:
    """Per-sample PSNR over the leading axis."""
    a, b = _np(a), _np(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = ((a - b) ** 2).reshape(len(a), -1).mean(1)
    return _psnr_from_mse(mse, peak, cap)


def temporal_consistency(frames, peak: float = 1.0, cap: float = 100.0, masks=None) -> float:
    """Mean pairwise PSNR over all unordered pairs of frames.

    With ``masks`` (one per frame, 0 = hole) each pair is compared only on
    pixels that are a hole in at least one of the two frames.
    """
    frames = [_np(f) for f in frames]
    if len(frames) < 2:
        raise ValueError("temporal consistency needs at least two frames")
    vals = []
    for i, j in combinations(range(len(frames)), 2):
        where = None
        if masks is not None:
            where = (_np(masks[i]) == 0) | (_np(masks[j]) == 0)
            where = np.broadcast_to(where.reshape(where.shape[-2:]), frames[i].shape[-2:])
            where = np.broadcast_to(where, frames[i].shape)
        vals.append(psnr(frames[i], frames[j], peak, cap, where))
    return float(np.mean(vals))


def temporal_consistency_batch(frames, peak: float = 1.0, cap: float = 100.0) -> np.ndarray:
    """Vectorized full-frame consistency for (B, T, ...) frames; returns (B,)."""
    x = _np(frames)
    b, t = x.shape[:2]
    if t < 2:
        raise ValueError("temporal consistency needs at least two frames")
    flat = x.reshape(b, t, -1)
    pairs = list(combinations(range(t), 2))
    mse = np.stack([((flat[:, i] - flat[:, j]) ** 2).mean(1) for i, j in pairs], axis=1)
    return _psnr_from_mse(mse, peak, cap).mean(1)


def per_frame_psnr(reconstructed, ground_truth, peak: float = 1.0, cap: float = 100.0) -> float:
    if len(reconstructed) != len(ground_truth):
        raise ValueError("reconstructed and ground_truth lengths differ")
    if len(reconstructed) == 0:
        raise ValueError("no frames given")
    return float(np.mean([psnr(r, g, peak, cap) for r, g in zip(reconstructed, ground_truth)]))


@dataclass
class SpeedupReport:
    iterative_s: float
    feedforward_s: float
    ratio: float
    iters: int
    n_images: int
    repeats: int
    hardware: str
    quality: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": REPORT_VERSION, **asdict(self)}


def _hardware_note() -> str:
    import os
    import platform
    return f"{platform.processor() or platform.machine()}; {os.cpu_count()} cpu; torch threads {torch.get_num_threads()}"


def bench_speedup(pred, gen, disc, images, masks, iters: int = 1500, repeats: int = 3,
                  w: LossWeights = LossWeights(), step: float = 0.01, seed: int = 0,
                  priors=None) -> SpeedupReport:
    """Per-image wall time of iterative vs single-pass inpainting.

    Both methods get one short untimed warm-up call; the reported time per image is
    the median over ``repeats`` timed calls, averaged over images. Quality
    numbers (PSNR of both outputs against the originals) are recorded too.
    """
    if len(images) == 0:
        raise ValueError("no images to benchmark")
    it_times, ff_times, q_it, q_ff = [], [], [], []
    prior0 = None if priors is None else priors[0]
    inpaint_iterative(gen, disc, images[0], masks[0], min(iters, 20), step, w, seed, prior0)
    inpaint(pred, gen, images[0], masks[0], prior0)
    for k, (img, mask) in enumerate(zip(images, masks)):
        prior = None if priors is None else priors[k]
        t_it, t_ff = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            out_it, _ = inpaint_iterative(gen, disc, img, mask, iters, step, w, seed + k, prior)
            t_it.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            out_ff, _ = inpaint(pred, gen, img, mask, prior)
            t_ff.append(time.perf_counter() - t0)
        it_times.append(statistics.median(t_it))
        ff_times.append(statistics.median(t_ff))
        q_it.append(psnr(out_it.reshape(np.shape(img)), img))
        q_ff.append(psnr(out_ff.reshape(np.shape(img)), img))
    it_s, ff_s = float(np.mean(it_times)), float(np.mean(ff_times))
    return SpeedupReport(it_s, ff_s, it_s / ff_s, iters, len(images), repeats, _hardware_note(),
                         {"psnr_iterative": float(np.mean(q_it)), "psnr_feedforward": float(np.mean(q_ff))})


@dataclass
class ModelBundle:
    """Frozen models needed by the ablation; any entry may be missing."""

    gan: tuple | None = None          # (generator, discriminator)
    cgan: tuple | None = None
    m1: object = None                 # unconditional predictor
    m2: object = None                 # unconditional sequence model
    m3: object = None                 # conditional predictor
    m4: object = None                 # conditional sequence model, lambda4 = 0
    m5: object = None                 # conditional sequence model, lambda4 > 0

    def require(self, method: str):
        needs = {"iterative": ["gan"], "M1": ["gan", "m1"], "M2": ["gan", "m2"],
                 "M3": ["cgan", "m3"], "M4": ["cgan", "m4"], "M5": ["cgan", "m5"]}[method]
        missing = [n for n in needs if getattr(self, n) is None]
        if missing:
            raise LookupError(f"method {method} needs missing model(s): {', '.join(missing)}")


@dataclass
class ConsistencyReport:
    method: str
    mask_kind: str
    seed: int
    per_sequence: list
    mean: float
    std: float


@dataclass
class EvalSettings:
    T: int = 4
    n_sequences: int = 100
    n_images: int = 0       # extra single-image PSNR run; 0 skips it
    iters: int = 1500
    step: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    chunk: int = 400


def synthetic_batch(sources, kind: str, T: int, seed: int):
    """Masks (B, T, 1, H, W) for synthetic sequences built from ``sources`` (B, H, W)."""
    b, h, w = np.shape(sources)
    masks = np.empty((b, T, 1, h, w), dtype=np.float32)
    for i in range(b):
        seeds = np.random.SeedSequence([seed, i]).generate_state(T, dtype=np.uint32)
        for t, s in enumerate(seeds):
            masks[i, t, 0] = generate_mask(default_spec(kind, int(s)), h, w)
    return masks


def run_method(method: str, bundle: ModelBundle, frames, masks, priors, settings: EvalSettings,
               seed: int):
    """Inpaint (B, T, 1, H, W) frames with one method; returns the composed frames."""
    bundle.require(method)
    x = torch.as_tensor(frames, dtype=torch.float32)
    m = torch.as_tensor(masks, dtype=torch.float32)
    c = torch.as_tensor(priors, dtype=torch.float32) if priors is not None else None
    b, t = x.shape[:2]
    flat = lambda a: None if a is None else a.flatten(0, 1)
    if method == "iterative":
        gen, disc = bundle.gan
        outs = []
        xf, mf = flat(x), flat(m)
        for k, start in enumerate(range(0, len(xf), settings.chunk)):
            sl = slice(start, start + settings.chunk)
            out, _ = inpaint_iterative_batch(gen, disc, xf[sl], mf[sl], settings.iters, settings.step,
                                             settings.weights, seed * 1000 + k)
            outs.append(out)
        return torch.cat(outs).view(x.shape)
    if method in ("M1", "M3"):
        gen = (bundle.gan if method == "M1" else bundle.cgan)[0]
        pred = bundle.m1 if method == "M1" else bundle.m3
        out, _ = inpaint(pred, gen, flat(x), flat(m), flat(c) if method == "M3" else None)
        return out.view(x.shape)
    gen = (bundle.gan if method == "M2" else bundle.cgan)[0]
    model = {"M2": bundle.m2, "M4": bundle.m4, "M5": bundle.m5}[method]
    return inpaint_sequence_batch(model, gen, x, m, c if method != "M2" else None)


def ablation_report(bundle: ModelBundle, images, keypoints, methods=METHODS, mask_kinds=("RC",),
                    seeds=(0, 1, 2), settings: EvalSettings | None = None, sigma: float = 2.0,
                    log=None):
    """Temporal consistency on synthetic sequences and per-frame PSNR for each method x mask kind.

    ``images``/``keypoints`` are held-out sources. The first ``n_sequences``
    sources build synthetic sequences; the first ``n_images`` are used for
    single-image PSNR (single-image methods only). Returns
    ``(consistency_reports, rows, summary)``.
    """
    settings = settings or EvalSettings()
    for m in methods:
        bundle.require(m)
    images = np.asarray(images, dtype=np.float32)
    h, w = images.shape[-2:]
    src = images[:settings.n_sequences]
    pri_src = prior_maps(np.asarray(keypoints)[:settings.n_sequences], sigma, h, w).astype(np.float32)
    frames = np.repeat(src[:, None, None], settings.T, axis=1)
    seq_priors = np.repeat(pri_src[:, None, None], settings.T, axis=1)
    single = images[:settings.n_images]
    single_pri = (prior_maps(np.asarray(keypoints)[:settings.n_images], sigma, h, w).astype(np.float32)
                  if len(single) else None)

    reports, rows = [], []
    for kind in mask_kinds:
        for seed in seeds:
            masks = synthetic_batch(src, kind, settings.T, seed)
            img_masks = synthetic_batch(single, kind, 1, 10_000 + seed) if len(single) else None
            for method in methods:
                cond = method in ("M3", "M4", "M5")
                out = run_method(method, bundle, frames, masks, seq_priors if cond else None, settings, seed)
                eta = temporal_consistency_batch(out)
                frame_psnr = float(psnr_batch(out.flatten(0, 1), np.repeat(src, settings.T, 0)[:, None]).mean())
                img_psnr = float("nan")
                if method in ("iterative", "M1", "M3") and len(single):
                    o1 = run_method(method, bundle, single[:, None, None], img_masks,
                                    single_pri[:, None, None] if cond else None, settings, seed + 7)
                    img_psnr = float(psnr_batch(o1[:, 0], single[:, None]).mean())
                rep = ConsistencyReport(method, kind, seed, eta.tolist(), float(eta.mean()), float(eta.std()))
                reports.append(rep)
                rows.append({"method": method, "mask_kind": kind, "seed": seed,
                             "eta_temp_mean": rep.mean, "eta_temp_std": rep.std,
                             "psnr_seq_frames": frame_psnr, "psnr_images": img_psnr,
                             "n_sequences": len(src), "n_images": len(single) if not np.isnan(img_psnr) else 0})
                if log:
                    log(f"{kind} seed {seed} {method}: eta_temp {rep.mean:.3f} dB, "
                        f"frame psnr {frame_psnr:.3f}, image psnr {img_psnr:.3f}")
    return reports, rows, summarize(rows)


def summarize(rows) -> list:
    """Seed-averaged table: one entry per method x mask kind."""
    out = []
    keys = []
    for r in rows:
        k = (r["method"], r["mask_kind"])
        if k not in keys:
            keys.append(k)
    for method, kind in keys:
        sel = [r for r in rows if r["method"] == method and r["mask_kind"] == kind]
        img = [r["psnr_images"] for r in sel if not np.isnan(r["psnr_images"])]
        out.append({
            "method": method, "mask_kind": kind, "seeds": [r["seed"] for r in sel],
            "eta_temp": float(np.mean([r["eta_temp_mean"] for r in sel])),
            "eta_temp_seed_std": float(np.std([r["eta_temp_mean"] for r in sel])),
            "psnr_seq_frames": float(np.mean([r["psnr_seq_frames"] for r in sel])),
            "psnr_images": float(np.mean(img)) if img else None,
        })
    return out


CSV_FIELDS = ("method", "mask_kind", "seed", "eta_temp_mean", "eta_temp_std", "psnr_seq_frames",
              "psnr_images", "n_sequences", "n_images")


def write_report(out_dir, rows, summary, extra: dict | None = None, plot: bool = True) -> Path:
    """CSV (one row per method x mask x seed), JSON summary and a bar plot."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: r[k] for k in CSV_FIELDS})
    doc = {"version": REPORT_VERSION, "summary": summary, **(extra or {})}
    (out_dir / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    if plot:
        _plot(summary, out_dir / "ablation.png")
    return out_dir


def _plot(summary, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kinds = list(dict.fromkeys(s["mask_kind"] for s in summary))
    methods = list(dict.fromkeys(s["method"] for s in summary))
    fig, ax = plt.subplots(figsize=(1.2 * len(methods) * len(kinds) + 2, 3.5))
    width = 0.8 / len(kinds)
    for k, kind in enumerate(kinds):
        vals = [next((s["eta_temp"] for s in summary if s["method"] == m and s["mask_kind"] == kind), np.nan)
                for m in methods]
        ax.bar(np.arange(len(methods)) + k * width, vals, width, label=kind)
    ax.set_xticks(np.arange(len(methods)) + width * (len(kinds) - 1) / 2)
    ax.set_xticklabels(methods)
    ax.set_ylabel("temporal consistency (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
