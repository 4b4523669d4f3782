"""Deterministic randomness helpers.

Every stochastic routine in the package derives its generator from an
explicit root seed plus a static tag path, so repeated runs are bitwise
identical and independent subsystems never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.blake2s(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def rng_from(root_seed: int, *tags) -> np.random.Generator:
    """Generator for (root_seed, tag, ...); stable across processes."""
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def seed_from(root_seed: int, *tags) -> int:
    """64-bit child seed for handing to APIs that take plain integers."""
    return int(rng_from(root_seed, *tags).integers(0, 2**63 - 1))


def normal_from_uniform(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Box-Muller transform; 2*len(u1) standard normal draws.

    Kept as an explicit formula (rather than Generator.standard_normal)
    so tests can regenerate the draws with an independent implementation
    from the same uniform stream.
    """
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])


def seeded_normal(seed: int, shape) -> np.ndarray:
    """Standard normal array of `shape`, Box-Muller over a PCG64 stream."""
    n = int(np.prod(shape)) if shape else 1
    m = (n + 1) // 2
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    u = rng.random(2 * m)
    draws = normal_from_uniform(u[:m], u[m:])
    return draws[:n].reshape(shape)
