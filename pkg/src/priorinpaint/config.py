"""Run configuration: typed sections, YAML loading, overrides and the resolved dump.

Unknown keys are rejected at every level. ``resolve`` merges (in increasing
precedence) the defaults, a YAML file, and ``section.key=value`` overrides.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .gan import GanConfig
from .losses import LossWeights
from .masking import MASK_KINDS
from .predictor import PredictorConfig
from .sequence import SeqConfig

CONFIG_VERSION = 1
OUT_ENV = "PRIORINPAINT_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    n_images: int = 5000
    n_sequences: int = 500
    T: int = 16
    test_images: int = 200
    height: int = 32
    width: int = 32
    smoothness: float = 0.15
    sigma: float = 2.0


@dataclass
class GanSection:
    d: int = 64
    steps: int = 6000
    batch_size: int = 64
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    g_loss: str = "nonsaturating"
    g_ch: int = 32
    d_ch: int = 16
    ema: float = 0.999

    def build(self, seed: int, conditional: bool) -> GanConfig:
        return GanConfig(**asdict(self), seed=seed, conditional=conditional)


@dataclass
class WeightsSection:
    lambda1: float = 1.0
    lambda2: float = 0.05
    lambda3: float = 0.2

    def build(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3)


@dataclass
class PredictorSection:
    steps: int = 2000
    batch_size: int = 64
    lr: float = 1e-3
    ch: int = 16
    norm: str = "l1"
    mask_kinds: list = field(default_factory=lambda: list(MASK_KINDS))
    mask_bank: int = 1000
    weights: WeightsSection = field(default_factory=WeightsSection)

    def build(self, seed: int) -> PredictorConfig:
        return PredictorConfig(self.lr, self.batch_size, self.steps, seed, self.ch, self.weights.build(),
                               tuple(self.mask_kinds), self.mask_bank, self.norm)


@dataclass
class SequenceSection:
    window: int = 4
    lambda4: float = 0.1
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    hidden: int = 128
    ch: int = 16
    norm: str = "l1"
    mask_kinds: list = field(default_factory=lambda: list(MASK_KINDS))
    mask_bank: int = 1000
    weights: WeightsSection = field(default_factory=WeightsSection)

    def build(self, seed: int, lambda4: float | None = None) -> SeqConfig:
        return SeqConfig(self.window, self.lambda4 if lambda4 is None else lambda4, self.lr, self.steps,
                         seed, self.batch_size, self.hidden, self.ch, self.weights.build(),
                         tuple(self.mask_kinds), self.mask_bank, self.norm)


@dataclass
class EvalSection:
    methods: list = field(default_factory=lambda: ["iterative", "M1", "M2", "M3", "M4", "M5"])
    mask_kinds: list = field(default_factory=lambda: ["RC"])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    T: int = 4
    n_sequences: int = 100
    n_images: int = 0
    iters: int = 1500
    step: float = 0.01
    chunk: int = 400


@dataclass
class BenchSection:
    iters: int = 1500
    n_images: int = 5
    repeats: int = 3
    mask_kind: str = "RC"


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    format_version: int = CONFIG_VERSION
    data: DataSection = field(default_factory=DataSection)
    gan: GanSection = field(default_factory=GanSection)
    predictor: PredictorSection = field(default_factory=PredictorSection)
    sequence: SequenceSection = field(default_factory=SequenceSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


def _coerce(cls, data, path=""):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        where = f"{path}.{name}" if path else name
        if is_dataclass(current):
            kwargs[name] = _coerce(type(current), value, where)
        else:
            kwargs[name] = _cast(current, value, where)
    return cls(**kwargs)


def _cast(default, value, where):
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where} expects a boolean, got {value!r}")
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            inner = type(default[0]) if default else str
            return [inner(v) for v in value]
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot interpret {value!r} as {type(default).__name__}") from None
    return value


def _set_path(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def resolve(path=None, overrides=(), out=None) -> RunConfig:
    """Defaults < YAML file < ``PRIORINPAINT_OUT`` (out only) < overrides < explicit ``out``."""
    tree = {}
    if path is not None:
        text = Path(path).read_text()
        tree = yaml.safe_load(text) or {}
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    if os.environ.get(OUT_ENV):
        tree["out"] = os.environ[OUT_ENV]
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        _set_path(tree, key.strip(), yaml.safe_load(raw) if raw else "")
    if out is not None:
        tree["out"] = str(out)
    cfg = _coerce(RunConfig, tree)
    if cfg.format_version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config format_version {cfg.format_version}")
    return cfg


def dump(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path


def smoke_config(out) -> RunConfig:
    """A configuration small enough for every stage to finish in seconds."""
    return resolve(overrides=[
        "data.n_images=64", "data.n_sequences=8", "data.T=6", "data.test_images=8",
        "gan.steps=30", "gan.batch_size=16", "gan.g_ch=8", "gan.d_ch=4", "gan.d=16", "gan.ema=0",
        "predictor.steps=20", "predictor.batch_size=16", "predictor.ch=4", "predictor.mask_bank=30",
        "sequence.steps=20", "sequence.batch_size=4", "sequence.ch=4", "sequence.hidden=16",
        "sequence.mask_bank=30",
        "eval.n_sequences=4", "eval.iters=5", "eval.seeds=[0]",
        "bench.iters=5", "bench.n_images=2", "bench.repeats=1",
    ], out=out)
