import io
import json
import zipfile

import numpy as np
import pytest
import torch

from priorinpaint import checkpoint
from priorinpaint.gan import load_gan, save_gan

pytestmark = pytest.mark.persistence


def test_hash_covers_name_dtype_shape_and_bytes():
    base = {"a": np.zeros((2, 3), np.float32)}
    h = checkpoint.params_hash(base)
    assert h == checkpoint.params_hash({"a": np.zeros((2, 3), np.float32)})
    assert h != checkpoint.params_hash({"b": np.zeros((2, 3), np.float32)})
    assert h != checkpoint.params_hash({"a": np.zeros((3, 2), np.float32)})
    assert h != checkpoint.params_hash({"a": np.zeros((2, 3), np.float64)})
    changed = np.zeros((2, 3), np.float32)
    changed[1, 1] = 1e-30
    assert h != checkpoint.params_hash({"a": changed})


def test_saving_twice_gives_identical_bytes(gan, tmp_path):
    save_gan(tmp_path / "a.ckpt", gan[0], gan[1], {"steps": 50})
    save_gan(tmp_path / "b.ckpt", gan[0], gan[1], {"steps": 50})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def _rewrite(src, dst, edit):
    with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w") as zout:
        for item in zin.infolist():
            data = edit(item.filename, zin.read(item.filename))
            zout.writestr(item, data)


def test_tampered_array_is_rejected(gan, tmp_path):
    src = tmp_path / "g.ckpt"
    save_gan(src, gan[0], gan[1])

    def edit(name, data):
        if name.startswith("arrays/") and "project.bias" in name:
            a = np.load(io.BytesIO(data))
            a[0] += 1
            buf = io.BytesIO()
            np.save(buf, a)
            return buf.getvalue()
        return data

    _rewrite(src, tmp_path / "bad.ckpt", edit)
    with pytest.raises(checkpoint.CheckpointError, match="hash"):
        load_gan(tmp_path / "bad.ckpt")


def test_kind_and_version_checks(gan, tmp_path):
    src = tmp_path / "g.ckpt"
    save_gan(src, gan[0], gan[1])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.read(src, "predictor")

    def bump(name, data):
        if name == "manifest.json":
            m = json.loads(data)
            m["format_version"] = 99
            return json.dumps(m).encode()
        return data

    _rewrite(src, tmp_path / "v.ckpt", bump)
    with pytest.raises(checkpoint.CheckpointError, match="format"):
        checkpoint.read(tmp_path / "v.ckpt")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.save(tmp_path / "x.ckpt", "mystery", {}, {})
    with pytest.raises(FileNotFoundError):
        checkpoint.read(tmp_path / "missing.ckpt")


def test_ref_and_manifest_contents(gan, tmp_path):
    r = save_gan(tmp_path / "g.ckpt", gan[0], gan[1], {"lr": 2e-4})
    again = checkpoint.ref(tmp_path / "g.ckpt")
    assert again.hash == r.hash and again.kind == "gan"
    manifest, arrays = checkpoint.read(tmp_path / "g.ckpt")
    assert manifest["config_hash"] == checkpoint.config_hash({"lr": 2e-4})
    assert set(arrays) == {e["name"] for e in manifest["arrays"]}
    assert all(isinstance(v, np.ndarray) for v in arrays.values())
    n_params = sum(p.numel() for p in gan[0].parameters()) + sum(p.numel() for p in gan[1].parameters())
    assert sum(a.size for a in arrays.values()) == n_params
    assert torch.equal(torch.from_numpy(arrays["generator.project.weight"]), gan[0].project.weight)
