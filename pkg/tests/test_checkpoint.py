"""Checkpoint container: round trips, byte determinism, corruption errors."""

import numpy as np
import pytest

from slotseg.checkpoint import (CheckpointError, ensure_arch_matches,
                                load_checkpoint, save_checkpoint)


def sample_groups(rng):
    return {
        "slot": {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4)},
        "decoder": {"scale": np.array(2.5), "table": rng.normal(size=(2, 2, 2))},
    }


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    groups = sample_groups(rng)
    arch = {"dim": 4, "k": 3}
    meta = {"phase": "test", "nested": {"x": [1, 2]}, "val": -float("inf")}
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, arch, groups, meta)
    arch2, groups2, meta2 = load_checkpoint(path)
    assert arch2 == arch
    assert meta2 == meta
    for g in groups:
        for name in groups[g]:
            assert np.array_equal(groups2[g][name], groups[g][name])
            assert groups2[g][name].dtype == np.float64


def test_equal_state_saves_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    groups = sample_groups(rng)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, {"d": 1}, groups, {"m": 1})
    # same content handed over in different dict insertion order
    reordered = {k: dict(reversed(list(v.items())))
                 for k, v in reversed(list(groups.items()))}
    save_checkpoint(b, {"d": 1}, reordered, {"m": 1})
    assert a.read_bytes() == b.read_bytes()


def test_rejects_non_float64(tmp_path):
    with pytest.raises(CheckpointError, match="float64"):
        save_checkpoint(tmp_path / "x.ckpt", {}, {
            "g": {"w": np.zeros(3, dtype=np.float32)}})
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "y.ckpt", {}, {"g": {"w": [1.0, 2.0]}})


def test_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, {"d": 1}, sample_groups(np.random.default_rng(2)))
    blob = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(bad)
    cut = tmp_path / "cut.ckpt"
    cut.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(cut)
    padded = tmp_path / "pad.ckpt"
    padded.write_bytes(blob + b"\x00" * 8)
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(padded)


def test_arch_mismatch_message(tmp_path):
    with pytest.raises(CheckpointError, match="different architecture"):
        ensure_arch_matches({"dim": 4}, {"dim": 8}, tmp_path / "a.ckpt")
    ensure_arch_matches({"dim": 4}, {"dim": 4}, tmp_path / "a.ckpt")


def test_loaded_arrays_are_writable_copies(tmp_path):
    path = tmp_path / "a.ckpt"
    groups = {"g": {"w": np.arange(4, dtype=np.float64)}}
    save_checkpoint(path, {}, groups)
    _, loaded, _ = load_checkpoint(path)
    loaded["g"]["w"][0] = 99.0  # must not raise (fresh allocation)
    _, reloaded, _ = load_checkpoint(path)
    assert reloaded["g"]["w"][0] == 0.0
