"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian u64 header length, canonical JSON
header, then raw float64 parameter blobs concatenated in (sorted group,
sorted parameter name) order. Canonical ordering makes saves of equal
state byte-identical, so checkpoints can be compared by file hash.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SSEGCKP1"


class CheckpointError(RuntimeError):
    pass


def _header_bytes(arch: dict, groups: dict, meta: dict) -> bytes:
    header = {
        "version": 1,
        "arch": arch,
        "meta": meta,
        "groups": {
            group: {name: list(groups[group][name].shape)
                    for name in sorted(groups[group])}
            for group in sorted(groups)
        },
    }
    return json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, arch: dict, groups: dict, meta: dict = None):
    """groups: {group_name: {param_name: float64 ndarray}}."""
    meta = dict(meta or {})
    for group in groups:
        for name, arr in groups[group].items():
            if not isinstance(arr, np.ndarray) or arr.dtype != np.float64:
                raise CheckpointError(
                    f"parameter {group}.{name} must be a float64 array")
    head = _header_bytes(arch, groups, meta)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for group in sorted(groups):
            for name in sorted(groups[group]):
                fh.write(np.ascontiguousarray(groups[group][name]).tobytes())


def load_checkpoint(path):
    """Returns (arch, groups, meta) with freshly allocated arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    (head_len,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + head_len].decode("utf-8"))
    if header.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version in {path}")
    offset = 16 + head_len
    groups = {}
    for group in sorted(header["groups"]):
        groups[group] = {}
        for name in sorted(header["groups"][group]):
            shape = tuple(header["groups"][group][name])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 8
            buf = blob[offset:offset + nbytes]
            if len(buf) < nbytes:
                raise CheckpointError(f"truncated checkpoint: {path}")
            groups[group][name] = (np.frombuffer(buf, dtype=np.float64)
                                   .reshape(shape).copy())
            offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint: {path}")
    return header["arch"], groups, header["meta"]


def ensure_arch_matches(expected: dict, found: dict, path):
    if expected != found:
        raise CheckpointError(
            f"checkpoint {path} was written for a different architecture: "
            f"expected {expected}, found {found}")
