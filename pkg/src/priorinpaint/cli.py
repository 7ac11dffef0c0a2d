"""Command line entry point: ``priorinpaint <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 missing or
mismatched dependency (dataset, checkpoint, model variant), 3 runtime
failure (divergence, I/O).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import checkpoint, pipeline
from ._util import OptimizationError, TrainingDiverged
from .baseline import inpaint_iterative
from .config import ConfigError, RunConfig, resolve
from .gan import clamp_score, load_gan
from .losses import contextual_loss, gradient_diff_loss, realism_loss
from .masking import MASK_KINDS, default_spec, generate_mask, load_mask
from .predictor import inpaint, load_predictor
from .sequence import inpaint_sequence, load_sequence
from .synthetic import load_png, save_png, render_prior_map

log = logging.getLogger("priorinpaint")

EXIT_OK, EXIT_USAGE, EXIT_DEPENDENCY, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--out", type=Path, help="output root (overrides config and $PRIORINPAINT_OUT)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="priorinpaint", description="Learned latent priors for GAN inpainting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render the synthetic training and test sets")
    _common(p)

    p = sub.add_parser("train", help="train one stage")
    _common(p)
    p.add_argument("stage", choices=["gan", "cgan", "predictor", "sequence"])
    p.add_argument("--conditional", action="store_true", help="use the keypoint-conditioned GAN")
    p.add_argument("--lambda4", type=float, help="subsequence consistency weight (sequence stage)")
    p.add_argument("--name", help="checkpoint name (default: gan, cgan or m1..m5)")
    p.add_argument("--steps", type=int, help="training steps for this stage")
    p.add_argument("--reuse", action="store_true", help="skip if an identical checkpoint exists")

    p = sub.add_parser("inpaint", help="inpaint images or a clip")
    _common(p)
    p.add_argument("mode", choices=["feedforward", "iterative", "sequence"])
    p.add_argument("inputs", nargs="+", type=Path, help="PNG images (sequence mode: frames in order)")
    p.add_argument("--gan", type=Path, help="GAN checkpoint (default: <out>/checkpoints/gan.ckpt)")
    p.add_argument("--model", type=Path,
                   help="predictor or sequence checkpoint (default: <out>/checkpoints/m1.ckpt or m2.ckpt)")
    p.add_argument("--mask", type=Path, nargs="+", help="mask PNGs, one per input")
    p.add_argument("--mask-kind", choices=MASK_KINDS, default="RC")
    p.add_argument("--mask-seed", type=int, default=0)
    p.add_argument("--keypoints", type=Path, nargs="+", help="keypoint JSON per input (conditional models)")
    p.add_argument("--iters", type=int, help="iterations (iterative mode)")
    p.add_argument("--dest", type=Path, help="output directory (default: <out>/inpaint/<mode>)")

    p = sub.add_parser("eval", help="ablation report on held-out synthetic sequences")
    _common(p)
    p.add_argument("--methods", help="comma-separated subset of iterative,M1..M5")
    p.add_argument("--seeds", help="comma-separated evaluation seeds")

    p = sub.add_parser("bench", help="iterative vs feed-forward timing")
    _common(p)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("report", help="summarize eval and bench outputs as markdown + plot")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "steps", None) is not None:
        section = {"gan": "gan", "cgan": "gan"}.get(args.stage, args.stage)
        overrides.append(f"{section}.steps={args.steps}")
    if getattr(args, "methods", None):
        overrides.append(f"eval.methods=[{args.methods}]")
    if getattr(args, "seeds", None):
        overrides.append(f"eval.seeds=[{args.seeds}]")
    return resolve(args.config, overrides, args.out)


def cmd_gen_data(cfg, args):
    info = pipeline.gen_data(cfg)
    print(f"wrote {cfg.out_dir / 'data'} ({info['spec']['n_images']} images, "
          f"{info['spec']['n_sequences']} sequences, {info['test_spec']['n_images']} test images)")


def cmd_train(cfg, args):
    ref = pipeline.train_stage(cfg, args.stage, args.conditional, args.lambda4, args.name, args.reuse)
    print(f"{ref.kind} checkpoint {ref.path} sha256={ref.hash}")


def _images(paths):
    imgs = []
    for p in paths:
        if not p.exists():
            raise UsageError(f"input {p} does not exist")
        imgs.append(load_png(p))
    shapes = {i.shape for i in imgs}
    if len(shapes) != 1:
        raise UsageError(f"inputs have different shapes: {sorted(shapes)}")
    return imgs


def _masks(args, n, h, w):
    if args.mask:
        if len(args.mask) != n:
            raise UsageError(f"got {len(args.mask)} masks for {n} inputs")
        out = []
        for p in args.mask:
            m, spec = load_mask(p)
            out.append((m, spec.to_json() if spec else str(p)))
        return out
    specs = [default_spec(args.mask_kind, args.mask_seed + i) for i in range(n)]
    return [(generate_mask(s, h, w), s.to_json()) for s in specs]


def _priors(args, n, h, w, cfg):
    if not args.keypoints:
        return None
    if len(args.keypoints) != n:
        raise UsageError(f"got {len(args.keypoints)} keypoint files for {n} inputs")
    return [render_prior_map(json.loads(p.read_text()), cfg.data.sigma, h, w) for p in args.keypoints]


def _losses(gen, disc, img, mask, z, prior):
    with torch.no_grad():
        x = torch.as_tensor(img, dtype=torch.float32)
        c = None if prior is None else torch.as_tensor(prior, dtype=torch.float32)[None, None]
        fake = gen(z[None], c)
        score = clamp_score(torch.sigmoid(disc(fake, c)))
        return {"contextual": contextual_loss(x, fake[0], mask).item(),
                "realism": realism_loss(score[0]).item(),
                "gradient": gradient_diff_loss(x, fake[0], mask).item()}


def cmd_inpaint(cfg, args):
    imgs = _images(args.inputs)
    h, w = imgs[0].shape
    masks = _masks(args, len(imgs), h, w)
    priors = _priors(args, len(imgs), h, w, cfg)
    ws = pipeline.Workspace(cfg)
    model_path = args.model
    if model_path is None and args.mode != "iterative":
        model_path = ws.ckpt("m1" if args.mode == "feedforward" else "m2")
    conditional = False
    if model_path is not None:
        if not model_path.exists():
            raise pipeline.DependencyError(f"missing model checkpoint {model_path}")
        conditional = checkpoint.read(model_path)[0]["arch"]["conditional"]
    gan_path = args.gan or ws.ckpt("cgan" if conditional else "gan")
    if not gan_path.exists():
        raise pipeline.DependencyError(f"missing GAN checkpoint {gan_path}")
    gen, disc, gman = load_gan(gan_path)
    if gen.conditional and priors is None:
        raise UsageError("a conditional model needs --keypoints for every input")
    if not gen.conditional:
        priors = None
    dest = args.dest or ws.root / "inpaint" / args.mode
    dest.mkdir(parents=True, exist_ok=True)

    if args.mode == "sequence":
        try:
            model, manifest = load_sequence(model_path, gen, disc)
        except checkpoint.CheckpointError as err:
            raise pipeline.DependencyError(str(err)) from None
        t0 = time.perf_counter()
        frames, zs = inpaint_sequence(model, gen, np.stack(imgs)[:, None], np.stack([m for m, _ in masks])[:, None],
                                      None if priors is None else np.stack(priors)[:, None])
        seconds = time.perf_counter() - t0
        T = len(imgs)
        windows = [[s, min(s + model.window, T)] for s in range(0, T, model.window)]
        log.info("sequence of %d frames in %d windows of up to %d: %s", T, len(windows), model.window, windows)
        for t, src in enumerate(args.inputs):
            save_png(dest / f"{t:03d}_{src.stem}.png", frames[t, 0].numpy())
            meta = {"input": str(src), "frame": t, "mask": masks[t][1], "z": zs[t].tolist(),
                    "window": next(i for i, (a, b) in enumerate(windows) if a <= t < b),
                    "losses": _losses(gen, disc, imgs[t], masks[t][0], zs[t], None if priors is None else priors[t])}
            (dest / f"{t:03d}_{src.stem}.json").write_text(json.dumps(meta, indent=2))
        (dest / "sequence.json").write_text(json.dumps({
            "frames": T, "window": model.window, "windows": windows, "seconds": seconds,
            "gan_hash": manifest["gan_hash"], "model_hash": manifest["params_hash"]}, indent=2))
        print(f"wrote {T} frames to {dest}")
        return

    pred = None
    if args.mode == "feedforward":
        try:
            pred, _ = load_predictor(model_path, gen, disc)
        except checkpoint.CheckpointError as err:
            raise pipeline.DependencyError(str(err)) from None
    iters = args.iters or cfg.eval.iters
    for i, (src, img, (mask, spec)) in enumerate(zip(args.inputs, imgs, masks)):
        prior = None if priors is None else priors[i]
        t0 = time.perf_counter()
        if pred is not None:
            out, z = inpaint(pred, gen, img, mask, prior)
            extra = {}
        else:
            out, trace = inpaint_iterative(gen, disc, img, mask, iters, cfg.eval.step,
                                           cfg.predictor.weights.build(), cfg.seed + i, prior)
            z = torch.tensor(trace.z)
            extra = {"iters": iters, "trace": trace.losses, "best_so_far": trace.best_so_far}
        seconds = time.perf_counter() - t0
        save_png(dest / f"{src.stem}.png", out[0].numpy())
        meta = {"input": str(src), "mode": args.mode, "mask": spec, "z": z.tolist(), "seconds": seconds,
                "losses": _losses(gen, disc, img, mask, z.float(), prior), "gan_hash": gman["params_hash"], **extra}
        (dest / f"{src.stem}.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {len(imgs)} image(s) to {dest}")


def cmd_eval(cfg, args):
    res = pipeline.run_eval(cfg, log_fn=log.info)
    for s in res["summary"]:
        print(f"{s['method']:>9} {s['mask_kind']:>3}  eta_temp {s['eta_temp']:.3f} dB  "
              f"frame psnr {s['psnr_seq_frames']:.3f} dB")
    print(f"report in {res['dir']}")


def cmd_bench(cfg, args):
    doc = pipeline.run_bench(cfg, args.iters)
    print(f"speedup {doc['ratio']:.1f}x at {doc['iters']} iterations "
          f"({doc['iterative_s'] * 1e3:.1f} ms vs {doc['feedforward_s'] * 1e3:.2f} ms per image)")


def cmd_report(cfg, args):
    print(f"wrote {pipeline.write_summary(cfg)}")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "inpaint": cmd_inpaint, "eval": cmd_eval,
            "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.DependencyError, LookupError) as err:
        print(f"dependency error: {err}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (TrainingDiverged, OptimizationError, OSError, checkpoint.CheckpointError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
