"""Checkpoint container shared by every model kind.

A checkpoint is a zip archive (stored, fixed timestamps) containing::

    manifest.json        format_version, kind, arch, config, config_hash,
                         params_hash, arrays [{name, dtype, shape}], plus
                         kind-specific fields (gan_hash, window, ...)
    arrays/<name>.npy    one NumPy .npy (v1.0, little-endian) file per tensor

``params_hash`` is the SHA-256 over, for each array in name order, the UTF-8
name, a NUL, the dtype string, the shape, a NUL and the raw little-endian
bytes. It identifies the parameters independently of the archive bytes and
is what downstream checkpoints pin.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1
KINDS = ("gan", "cgan", "predictor", "sequence")
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class CheckpointRef:
    path: Path
    hash: str
    kind: str


def state_arrays(modules: dict) -> dict:
    """Flatten ``{prefix: nn.Module}`` into ``{prefix.param: ndarray}``."""
    out = {}
    for prefix, module in modules.items():
        for name, t in module.state_dict().items():
            out[f"{prefix}.{name}"] = t.detach().cpu().numpy()
    return dict(sorted(out.items()))


def params_hash(arrays: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        h.update(name.encode() + b"\0" + a.dtype.str.encode() + repr(a.shape).encode() + b"\0")
        h.update(a.tobytes())
    return h.hexdigest()


def modules_hash(modules: dict) -> str:
    return params_hash(state_arrays(modules))


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def _write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save(path, kind: str, modules: dict, arch: dict, config: dict | None = None,
         extra: dict | None = None) -> CheckpointRef:
    if kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    arrays = state_arrays(modules)
    config = config or {}
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arch": arch,
        "config": config,
        "config_hash": config_hash(config),
        "params_hash": params_hash(arrays),
        "arrays": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in arrays.items()],
        **(extra or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode())
        for name, a in arrays.items():
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")), allow_pickle=False)
            _write(zf, f"arrays/{name}.npy", buf.getvalue())
    return CheckpointRef(path, manifest["params_hash"], kind)


def read(path, kind: str | None = None):
    """Return ``(manifest, arrays)`` after verifying the parameter hash."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')}")
        arrays = {}
        for entry in manifest["arrays"]:
            arrays[entry["name"]] = np.load(io.BytesIO(zf.read(f"arrays/{entry['name']}.npy")),
                                            allow_pickle=False)
    if kind is not None and manifest["kind"] != kind:
        raise CheckpointError(f"{path} holds a {manifest['kind']!r} checkpoint, expected {kind!r}")
    if params_hash(arrays) != manifest["params_hash"]:
        raise CheckpointError(f"{path}: parameter hash mismatch")
    return manifest, arrays


def load_into(modules: dict, arrays: dict):
    for prefix, module in modules.items():
        state = {k[len(prefix) + 1:]: torch.from_numpy(v.copy()) for k, v in arrays.items()
                 if k.startswith(prefix + ".")}
        module.load_state_dict(state)
    return modules


def ref(path) -> CheckpointRef:
    manifest, _ = read(path)
    return CheckpointRef(Path(path), manifest["params_hash"], manifest["kind"])
