"""Checkpoint archive and run-config round trips."""

import struct

import numpy as np
import pytest

from scanet.checkpoint import (CheckpointError, load_checkpoint,
                               restore_parameters, save_checkpoint)
from scanet.config import RunConfig, format_config, parse_config
from scanet.tensor import Parameter, Tensor


def _params(rng):
    return [Parameter(Tensor(rng.standard_normal((3, 2)).astype(np.float32)), "a.w"),
            Parameter(Tensor(rng.standard_normal(4)), "a.b"),
            Parameter(Tensor(rng.standard_normal((2, 2, 3, 3)).astype(np.float32)),
                      "blk.conv_w")]


def test_round_trip_bitwise(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    archive = load_checkpoint(path)
    assert list(archive) == [p.name for p in params]
    for p in params:
        assert archive[p.name].dtype == p.value.dtype
        assert np.array_equal(archive[p.name], p.value.data)


def test_restore_into_model(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    fresh = _params(np.random.default_rng(999))
    restore_parameters(fresh, load_checkpoint(path))
    for a, b in zip(fresh, params):
        assert np.array_equal(a.value.data, b.value.data)


def test_version_mismatch_rejected(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _params(rng))
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"JUNKxxxx")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_mismatch_names_first_offender(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    archive = load_checkpoint(path)
    wrong = _params(rng)
    wrong[1] = Parameter(Tensor(np.zeros(5)), "a.b")  # shape mismatch
    with pytest.raises(CheckpointError, match="a.b"):
        restore_parameters(wrong, archive)
    missing = [Parameter(Tensor(np.zeros(1)), "nope")]
    with pytest.raises(CheckpointError, match="nope"):
        restore_parameters(missing, archive)


def test_dtype_mismatch_rejected(tmp_path, rng):
    params = _params(rng)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    archive = load_checkpoint(path)
    wrong = _params(rng)
    wrong[0] = Parameter(Tensor(np.zeros((3, 2), dtype=np.float64)), "a.w")
    with pytest.raises(CheckpointError, match="dtype"):
        restore_parameters(wrong, archive)


def test_config_round_trip_default_and_modified():
    cfg = RunConfig()
    assert parse_config(format_config(cfg)) == cfg
    cfg.variant = "sa"
    cfg.widths = (8, 8, 16, 16, 16)
    cfg.lr = 5e-4
    cfg.strip_norm = False
    cfg.seeds = (7,)
    cfg.data_root = "/some/where"
    assert parse_config(format_config(cfg)) == cfg


def test_config_rejects_unknown_keys_and_garbage():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("nonsense = 1\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config("justtext\n")
    with pytest.raises(ValueError, match="boolean"):
        parse_config("strip_norm = maybe\n")


def test_config_comments_and_blanks():
    text = "# comment\n\nvariant = ca  # trailing\n"
    assert parse_config(text).variant == "ca"
