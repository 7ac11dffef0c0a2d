"""Stage runners shared by the command line and the acceptance tests.

An output root looks like::

    data/train, data/test          datasets (see ``synthetic.make_dataset``)
    checkpoints/{name}.ckpt        gan, cgan, m1 .. m5
    checkpoints/{name}.json        stage record: hashes, stage config, wall time
    checkpoints/{name}.history.json
    checkpoints/{name}.config.yaml fully resolved run config
    eval/                          ablation.csv / .json / .png, run.json
    bench/                         speedup.json, run.json

Model names map to the ablation ladder: m1 single-image predictor, m2
recurrent grouped predictor, m3 and m4 their keypoint-conditioned versions,
m5 = m4 trained with the subsequence consistency term.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import checkpoint
from .config import RunConfig, dump
from .evaluation import EvalSettings, ModelBundle, ablation_report, bench_speedup, write_report
from .gan import gan_hash, load_gan, save_gan, train_cgan, train_gan
from .masking import default_spec, generate_mask
from .predictor import load_predictor, save_predictor, train_predictor
from .sequence import load_sequence, save_sequence, train_sequence
from .synthetic import FORMAT_VERSION as DATA_VERSION
from .synthetic import load_dataset, make_dataset, validate_manifest

log = logging.getLogger(__name__)

RECORD_VERSION = 1
# name -> (stage, conditional, lambda4 override)
VARIANTS = {
    "m1": ("predictor", False, None),
    "m2": ("sequence", False, 0.0),
    "m3": ("predictor", True, None),
    "m4": ("sequence", True, 0.0),
    "m5": ("sequence", True, None),
}
METHOD_MODEL = {"M1": "m1", "M2": "m2", "M3": "m3", "M4": "m4", "M5": "m5"}


class DependencyError(RuntimeError):
    """A required input (dataset or checkpoint) is missing or mismatched."""


def variant_name(stage: str, conditional: bool, lambda4: float | None) -> str:
    if stage in ("gan", "cgan"):
        return stage
    if stage == "predictor":
        return "m3" if conditional else "m1"
    if not conditional:
        return "m2"
    return "m4" if lambda4 == 0 else "m5"


class Workspace:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = cfg.out_dir

    @property
    def train_dir(self) -> Path:
        return self.root / "data" / "train"

    @property
    def test_dir(self) -> Path:
        return self.root / "data" / "test"

    def ckpt(self, name: str) -> Path:
        return self.root / "checkpoints" / f"{name}.ckpt"

    def record_path(self, name: str) -> Path:
        return self.root / "checkpoints" / f"{name}.json"

    def record(self, name: str) -> dict | None:
        p = self.record_path(name)
        return json.loads(p.read_text()) if p.exists() else None

    def require_data(self, which="train"):
        d = self.train_dir if which == "train" else self.test_dir
        if not (d / "manifest.json").exists():
            raise DependencyError(f"missing {which} dataset at {d}; run gen-data first")
        validate_manifest(d)
        return load_dataset(d)

    def require_gan(self, conditional: bool):
        kind = "cgan" if conditional else "gan"
        path = self.ckpt(kind)
        if not path.exists():
            raise DependencyError(f"missing {kind} checkpoint ({path}); run 'train {kind}' first")
        gen, disc, _ = load_gan(path, kind)
        return gen, disc


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str))


def gen_data(cfg: RunConfig, reuse: bool = False) -> dict:
    ws = Workspace(cfg)
    d = cfg.data
    spec = {"n_images": d.n_images, "n_sequences": d.n_sequences, "T": d.T, "h": d.height, "w": d.width,
            "seed": cfg.seed, "smoothness": d.smoothness, "sigma": d.sigma}
    test_spec = {**spec, "n_images": d.test_images, "n_sequences": 0, "seed": cfg.seed + 1_000_003}
    done = ws.root / "data" / "run.json"
    if reuse and done.exists():
        prev = json.loads(done.read_text())
        if prev.get("spec") == spec and prev.get("test_spec") == test_spec:
            return prev
    t0 = time.perf_counter()
    make_dataset(ws.train_dir, **spec)
    if d.test_images:
        make_dataset(ws.test_dir, **test_spec)
    info = {"spec": spec, "test_spec": test_spec, "format_version": DATA_VERSION,
            "seconds": time.perf_counter() - t0}
    _write_json(done, info)
    dump(cfg, ws.root / "data" / "config.yaml")
    return info


def _stage_config(cfg: RunConfig, stage: str, conditional: bool, lambda4):
    if stage in ("gan", "cgan"):
        return cfg.gan.build(cfg.seed, stage == "cgan")
    if stage == "predictor":
        return cfg.predictor.build(cfg.seed)
    return cfg.sequence.build(cfg.seed, lambda4)


def _stage_dict(c) -> dict:
    out = asdict(c)
    for k, v in out.items():
        if isinstance(v, tuple):
            out[k] = list(v)
    return out


def train_stage(cfg: RunConfig, stage: str, conditional: bool = False, lambda4: float | None = None,
                name: str | None = None, reuse: bool = False) -> checkpoint.CheckpointRef:
    """Train one model and persist checkpoint, history, record and resolved config.

    With ``reuse`` an existing checkpoint whose record matches the stage
    config, data and GAN hash is returned without retraining.
    """
    if stage not in ("gan", "cgan", "predictor", "sequence"):
        raise ValueError(f"unknown stage {stage!r}")
    conditional = conditional or stage == "cgan"
    if stage == "sequence" and lambda4 is None:
        lambda4 = cfg.sequence.lambda4
    name = name or variant_name(stage, conditional, lambda4)
    ws = Workspace(cfg)
    scfg = _stage_config(cfg, stage, conditional, lambda4)
    sdict = _stage_dict(scfg)
    # dependency checks come before any (possibly slow) data loading
    gen = disc = None
    depends = {}
    if stage in ("predictor", "sequence"):
        gen, disc = ws.require_gan(conditional)
        depends["gan_hash"] = gan_hash(gen, disc)
    ds = ws.require_data("train")
    depends["data"] = ds.manifest
    identity = {"stage": stage, "conditional": conditional, "config": sdict, "depends": depends}

    path = ws.ckpt(name)
    rec = ws.record(name)
    if reuse and rec and path.exists() and rec.get("identity") == json.loads(json.dumps(identity, default=str)):
        return checkpoint.ref(path)

    t0 = time.perf_counter()
    priors = ds.priors()[:, None] if conditional else None
    if stage == "gan":
        gen, disc, hist = train_gan(ds.images[:, None], scfg)
        ref = save_gan(path, gen, disc, sdict)
    elif stage == "cgan":
        gen, disc, hist = train_cgan(ds.images[:, None], priors, scfg)
        ref = save_gan(path, gen, disc, sdict)
    elif stage == "predictor":
        model, hist = train_predictor(gen, disc, ds.images[:, None], cfg=scfg, priors=priors)
        ref = save_predictor(path, model, gen, disc, sdict)
    else:
        seq_priors = ds.seq_priors() if conditional else None
        model, hist = train_sequence(gen, disc, ds.sequences, cfg=scfg, seq_priors=seq_priors)
        ref = save_sequence(path, model, gen, disc, sdict, lambda4)
    seconds = time.perf_counter() - t0
    _write_json(ws.root / "checkpoints" / f"{name}.history.json", hist)
    _write_json(ws.record_path(name), {
        "version": RECORD_VERSION, "name": name, "kind": ref.kind, "hash": ref.hash,
        "identity": identity, "seconds": seconds, "torch": torch.__version__,
    })
    dump(cfg, ws.root / "checkpoints" / f"{name}.config.yaml")
    log.info("trained %s (%s) in %.1f s -> %s", name, stage, seconds, path)
    return ref


def train_all(cfg: RunConfig, reuse: bool = True) -> dict:
    """GANs first, then the five ablation models; returns {name: CheckpointRef}."""
    refs = {"gan": train_stage(cfg, "gan", reuse=reuse), "cgan": train_stage(cfg, "cgan", reuse=reuse)}
    for name, (stage, cond, lam) in VARIANTS.items():
        refs[name] = train_stage(cfg, stage, cond, lam, name=name, reuse=reuse)
    return refs


def load_bundle(cfg: RunConfig, methods) -> ModelBundle:
    """Load exactly the models the requested methods need; missing ones raise DependencyError."""
    ws = Workspace(cfg)
    bundle = ModelBundle()
    need_gan = any(m in ("iterative", "M1", "M2") for m in methods)
    need_cgan = any(m in ("M3", "M4", "M5") for m in methods)
    if need_gan:
        bundle.gan = ws.require_gan(False)
    if need_cgan:
        bundle.cgan = ws.require_gan(True)
    for method in methods:
        if method == "iterative":
            continue
        if method not in METHOD_MODEL:
            raise DependencyError(f"unknown method {method!r}")
        name = METHOD_MODEL[method]
        path = ws.ckpt(name)
        if not path.exists():
            raise DependencyError(f"method {method} needs checkpoint {name} ({path}), which is missing")
        stage, cond, _ = VARIANTS[name]
        gen, disc = bundle.cgan if cond else bundle.gan
        loader = load_predictor if stage == "predictor" else load_sequence
        try:
            model, _ = loader(path, gen, disc)
        except checkpoint.CheckpointError as err:
            raise DependencyError(str(err)) from None
        setattr(bundle, name, model)
    return bundle


def _hashes(ws: Workspace, names) -> dict:
    out = {}
    for n in names:
        rec = ws.record(n)
        if rec:
            out[n] = rec["hash"]
    return out


def run_eval(cfg: RunConfig, methods=None, log_fn=None) -> dict:
    ws = Workspace(cfg)
    e = cfg.eval
    methods = list(methods or e.methods)
    bundle = load_bundle(cfg, methods)
    test = ws.require_data("test")
    settings = EvalSettings(T=e.T, n_sequences=e.n_sequences, n_images=e.n_images, iters=e.iters,
                            step=e.step, weights=cfg.predictor.weights.build(), chunk=e.chunk)
    t0 = time.perf_counter()
    _, rows, summary = ablation_report(bundle, test.images, test.keypoints, methods, tuple(e.mask_kinds),
                                       tuple(e.seeds), settings, test.sigma, log_fn)
    seconds = time.perf_counter() - t0
    names = ["gan", "cgan"] + [METHOD_MODEL[m] for m in methods if m in METHOD_MODEL]
    extra = {"methods": methods, "checkpoints": _hashes(ws, names), "seconds": seconds,
             "data": test.manifest, "eval": asdict(e)}
    out = write_report(ws.root / "eval", rows, summary, extra)
    dump(cfg, out / "config.yaml")
    return {"rows": rows, "summary": summary, "seconds": seconds, "dir": out}


def run_bench(cfg: RunConfig, iters: int | None = None) -> dict:
    ws = Workspace(cfg)
    b = cfg.bench
    bundle = load_bundle(cfg, ["M1"])
    test = ws.require_data("test")
    images = test.images[:b.n_images]
    if len(images) == 0:
        raise DependencyError("bench needs at least one test image")
    h, w = images.shape[-2:]
    masks = [generate_mask(default_spec(b.mask_kind, cfg.seed + i), h, w) for i in range(len(images))]
    gen, disc = bundle.gan
    prev = torch.get_num_threads()
    t0 = time.perf_counter()
    torch.set_num_threads(1)        # timings on a single worker
    try:
        rep = bench_speedup(bundle.m1, gen, disc, list(images), masks, iters or b.iters, b.repeats,
                            cfg.predictor.weights.build(), cfg.eval.step, cfg.seed)
    finally:
        torch.set_num_threads(prev)
    out = ws.root / "bench"
    doc = {**rep.to_dict(), "checkpoints": _hashes(ws, ["gan", "m1"]), "seconds": time.perf_counter() - t0}
    _write_json(out / "speedup.json", doc)
    dump(cfg, out / "config.yaml")
    return doc


def stage_seconds(cfg: RunConfig) -> dict:
    """Recorded wall time of every stage that has run under this root."""
    ws = Workspace(cfg)
    out = {}
    data = ws.root / "data" / "run.json"
    if data.exists():
        out["data"] = json.loads(data.read_text())["seconds"]
    for name in ["gan", "cgan", *VARIANTS]:
        rec = ws.record(name)
        if rec:
            out[name] = rec["seconds"]
    ev = ws.root / "eval" / "ablation.json"
    if ev.exists():
        out["eval"] = json.loads(ev.read_text()).get("seconds", 0.0)
    return out


def write_summary(cfg: RunConfig) -> Path:
    """Markdown digest of whatever eval/bench outputs exist."""
    ws = Workspace(cfg)
    lines = ["# Run summary", ""]
    ev = ws.root / "eval" / "ablation.json"
    if ev.exists():
        doc = json.loads(ev.read_text())
        lines += ["| method | mask | eta_temp (dB) | seed std | per-frame PSNR (dB) |",
                  "|---|---|---|---|---|"]
        for s in doc["summary"]:
            lines.append(f"| {s['method']} | {s['mask_kind']} | {s['eta_temp']:.3f} | "
                         f"{s['eta_temp_seed_std']:.3f} | {s['psnr_seq_frames']:.3f} |")
        lines.append("")
    bench = ws.root / "bench" / "speedup.json"
    if bench.exists():
        b = json.loads(bench.read_text())
        lines += [f"Speedup at {b['iters']} iterations: {b['ratio']:.1f}x "
                  f"({b['iterative_s'] * 1e3:.1f} ms vs {b['feedforward_s'] * 1e3:.2f} ms per image; "
                  f"{b['hardware']})", ""]
    secs = stage_seconds(cfg)
    if secs:
        lines += ["Stage wall times (s): " + ", ".join(f"{k} {v:.0f}" for k, v in secs.items()),
                  f"Total: {sum(secs.values()) / 60:.1f} min", ""]
    if len(lines) == 2:
        raise DependencyError(f"nothing to report under {ws.root}; run eval or bench first")
    path = ws.root / "report.md"
    path.write_text("\n".join(lines))
    if ev.exists():
        from .evaluation import _plot
        _plot(json.loads(ev.read_text())["summary"], ws.root / "eval" / "ablation.png")
    return path


def run_all(cfg: RunConfig, reuse: bool = True, log_fn=None) -> dict:
    """Data, all seven models and the ablation; cached stages are reused when unchanged."""
    ws = Workspace(cfg)
    gen_data(cfg, reuse=reuse)
    refs = train_all(cfg, reuse=reuse)
    path = ws.root / "eval" / "ablation.json"
    doc = json.loads(path.read_text()) if reuse and path.exists() else None
    names = ["gan", "cgan"] + [METHOD_MODEL[m] for m in cfg.eval.methods if m in METHOD_MODEL]
    if not (doc and doc.get("checkpoints") == _hashes(ws, names) and doc.get("eval") == asdict(cfg.eval)):
        run_eval(cfg, log_fn=log_fn)
        doc = json.loads(path.read_text())
    return {"refs": refs, "eval": doc, "seconds": stage_seconds(cfg)}
