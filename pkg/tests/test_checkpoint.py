"""Binary checkpoint format: roundtrips and corruption handling."""

import json
import struct

import numpy as np
import pytest

from dctau.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    load_checkpoint,
    save_checkpoint,
    sidecar_path,
)
from dctau.config import TrainConfig
from dctau.errors import InvalidArgumentError
from dctau.model import init_params


def _params():
    return init_params(5, (8, 6), 4, 3, seed=42, classifier_hidden=7)


def _cfg():
    return TrainConfig(class_count=6, known_count=4, hidden=(8, 6), seed=17)


def test_roundtrip_is_bitwise(tmp_path):
    path = tmp_path / "model.bin"
    params = _params()
    save_checkpoint(path, params, _cfg(), 17)
    loaded, cfg, seed = load_checkpoint(path)

    for section in ("encoder", "projection", "classifier"):
        orig = getattr(params, section)
        back = getattr(loaded, section)
        assert len(orig) == len(back)
        for a, b in zip(orig, back):
            assert np.array_equal(a.weight, b.weight)
            assert a.weight.dtype == b.weight.dtype == np.float64
            assert np.array_equal(a.bias, b.bias)

    assert seed == 17
    assert cfg == _cfg()
    assert isinstance(cfg.hidden, tuple)


def test_sidecar_contents(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, _params(), _cfg(), 5)
    with open(sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    assert sidecar["format_version"] == FORMAT_VERSION
    assert sidecar["seed"] == 5
    assert sidecar["config"]["known_count"] == 4
    assert sidecar["config"]["hidden"] == [8, 6]


def test_missing_sidecar_loads_params_only(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, _params(), _cfg(), 5)
    (tmp_path / "model.bin.json").unlink()
    loaded, cfg, seed = load_checkpoint(path)
    assert cfg is None and seed is None
    assert np.array_equal(loaded.encoder[0].weight, _params().encoder[0].weight)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "model.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(InvalidArgumentError, match="not a checkpoint"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "model.bin"
    path.write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION + 9) + b"\x00" * 8)
    with pytest.raises(InvalidArgumentError, match="version"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, _params(), _cfg(), 0)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    with pytest.raises(InvalidArgumentError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, _params(), _cfg(), 0)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 8)
    with pytest.raises(InvalidArgumentError, match="trailing"):
        load_checkpoint(path)


def test_corrupt_manifest_rejected(tmp_path):
    path = tmp_path / "model.bin"
    garbage = b"{not json"
    path.write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION)
                     + struct.pack("<I", len(garbage)) + garbage)
    with pytest.raises(InvalidArgumentError, match="manifest"):
        load_checkpoint(path)


def test_incomplete_layer_rejected(tmp_path):
    path = tmp_path / "model.bin"
    save_checkpoint(path, _params(), _cfg(), 0)
    data = bytearray(path.read_bytes())
    (manifest_len,) = struct.unpack_from("<I", data, len(MAGIC) + 4)
    start = len(MAGIC) + 8
    manifest = json.loads(data[start : start + manifest_len].decode("utf-8"))
    manifest["blocks"][1]["kind"] = "weight"  # duplicate kind, bias now missing
    new_manifest = json.dumps(manifest).encode("utf-8")
    rebuilt = (
        bytes(data[: len(MAGIC) + 4])
        + struct.pack("<I", len(new_manifest))
        + new_manifest
        + bytes(data[start + manifest_len :])
    )
    path.write_bytes(rebuilt)
    with pytest.raises(InvalidArgumentError, match="incomplete"):
        load_checkpoint(path)


def test_empty_encoder_roundtrip(tmp_path):
    path = tmp_path / "id.bin"
    params = init_params(4, (), 3, 2, seed=0)
    save_checkpoint(path, params, _cfg(), 1)
    loaded, _, _ = load_checkpoint(path)
    assert loaded.encoder == ()
    assert np.array_equal(loaded.projection[0].weight, params.projection[0].weight)
