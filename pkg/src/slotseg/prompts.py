"""Weak-prompt synthesis from instance masks: boxes, points, coarse polys.

The poly prompt deliberately degrades the mask: the boundary is simplified
to a small star polygon around the mask centroid (radial max per angular
bin), jittered, and rasterized. A deterministic retry ladder keeps the
result's IoU with the true mask inside the [0.3, 0.95] coarseness band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import rng_from


@dataclass
class Prompt:
    kind: str  # box | point | poly
    box: tuple = None  # (r0, c0, r1, c1), inclusive, when kind == box
    points: list = None  # of (r, c) foreground pixels, when kind == point
    coarse_mask: np.ndarray = None  # (H, W) uint8, when kind == poly
    target_index: int = 0


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(bool)
    b = b.astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def _derive_box(mask: np.ndarray, rng: np.random.Generator, jitter: float):
    rows = np.where(mask.any(axis=1))[0]
    cols = np.where(mask.any(axis=0))[0]
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    if jitter > 0.0:
        bh, bw = r1 - r0 + 1, c1 - c0 + 1
        h, w = mask.shape
        r0 = int(np.clip(r0 + round(rng.uniform(-jitter, jitter) * bh), 0, h - 1))
        r1 = int(np.clip(r1 + round(rng.uniform(-jitter, jitter) * bh), 0, h - 1))
        c0 = int(np.clip(c0 + round(rng.uniform(-jitter, jitter) * bw), 0, w - 1))
        c1 = int(np.clip(c1 + round(rng.uniform(-jitter, jitter) * bw), 0, w - 1))
        r0, r1 = min(r0, r1), max(r0, r1)
        c0, c1 = min(c0, c1), max(c0, c1)
    return (r0, c0, r1, c1)


def _star_attempt(mask: np.ndarray, v: int, noise: float,
                  rng: np.random.Generator) -> np.ndarray:
    h, w = mask.shape
    fg = np.argwhere(mask)
    pr = fg[:, 0] + 0.5
    pc = fg[:, 1] + 0.5
    my, mx = pr.mean(), pc.mean()
    ang = np.arctan2(pr - my, pc - mx)
    rad = np.hypot(pr - my, pc - mx)

    sector = 2.0 * np.pi / v
    phase = rng.uniform(0.0, sector)
    bins = np.floor(((ang - phase) % (2.0 * np.pi)) / sector).astype(int)
    bins = np.clip(bins, 0, v - 1)
    fallback = float(np.median(rad)) if rad.size else 1.0
    radii = np.full(v, fallback)
    for k in range(v):
        sel = bins == k
        if sel.any():
            radii[k] = rad[sel].max()
    radii = radii + 0.5  # reach the outer pixel edge, not just its center
    if noise > 0.0:
        radii = radii * rng.uniform(1.0 - noise, 1.0 + noise, size=v)
    centers = phase + (np.arange(v) + 0.5) * sector
    verts = np.empty(2 * v)
    verts[0::2] = my + radii * np.sin(centers)
    verts[1::2] = mx + radii * np.cos(centers)
    return kernels.fill_polygon(verts, h, w)


def _derive_poly(mask: np.ndarray, v: int, jitter: float,
                 rng: np.random.Generator) -> np.ndarray:
    noise_ladder = [max(jitter, 0.0), 0.15, 0.25, 0.4]
    for noise in noise_ladder:
        coarse = _star_attempt(mask, v, noise, rng)
        if coarse.any() and 0.3 <= _mask_iou(coarse, mask) <= 0.95:
            return coarse
    # guaranteed degrade: union with a shifted copy never drops IoU below
    # 1/2 and grows the union until it clears the 0.95 ceiling
    for k in range(1, 9):
        coarse = (mask.astype(bool)
                  | np.roll(mask.astype(bool), k, axis=1)).astype(np.uint8)
        if 0.3 <= _mask_iou(coarse, mask) <= 0.95:
            return coarse
    raise RuntimeError("could not derive a coarse poly prompt in band")


def derive_prompt(mask: np.ndarray, kind: str, seed: int, jitter: float = 0.1,
                  n_points: int = 1, poly_vertices: int = 8,
                  target_index: int = 0) -> Prompt:
    if not np.any(mask):
        raise ValueError("cannot derive a prompt from an empty mask")
    if jitter < 0.0:
        raise ValueError("jitter must be >= 0")
    rng = rng_from(seed, "prompt", kind)

    if kind == "box":
        return Prompt(kind="box", box=_derive_box(mask, rng, jitter),
                      target_index=target_index)
    if kind == "point":
        fg = np.argwhere(mask)
        replace = len(fg) < n_points
        idx = rng.choice(len(fg), size=n_points, replace=replace)
        points = [(int(fg[i, 0]), int(fg[i, 1])) for i in np.atleast_1d(idx)]
        return Prompt(kind="point", points=points, target_index=target_index)
    if kind == "poly":
        coarse = _derive_poly(mask, poly_vertices, jitter, rng)
        return Prompt(kind="poly", coarse_mask=coarse, target_index=target_index)
    raise ValueError(f"unknown prompt kind {kind!r}")


PROMPT_KINDS = ("box", "point", "poly")
