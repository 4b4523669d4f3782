"""Synthetic multi-object sprite scenes with exact instance masks.

Scenes are procedurally generated: textured sprites (circles, squares,
triangles, star-convex blobs) placed with rejection sampling over a
textured background. Rasterization gives each pixel to the first sprite
containing it, so instance masks are disjoint by construction. Images are
quantized to 8-bit levels at generation time, making the PNG round-trip
lossless.

The source and target domains differ in color palette, texture frequency
mix and background; `apply_shift` additionally moves a rendered sample's
statistics (texture swap, channel-affine color transform, noise) without
touching geometry, so masks carry over unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import (FLT_STRIDE, MAX_VERTICES, SHAPE_CIRCLE, SHAPE_POLYGON,
                      TEX_CHECKER, TEX_DOTS, TEX_FLAT, TEX_STRIPES)
from .rng import rng_from


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 64
    min_objects: int = 2
    max_objects: int = 4
    radius_min: float = 0.11  # fraction of min(height, width)
    radius_max: float = 0.20
    domain: str = "source"


@dataclass
class SceneSample:
    image: np.ndarray  # (H, W, 3) float64 in [0, 1], 8-bit quantized
    instance_masks: list  # of (H, W) uint8 arrays, pairwise disjoint
    object_count: int
    seed: int
    domain_tag: str
    # raw sprite encoding, kept so texture swaps can re-render in place
    render_ints: np.ndarray = field(repr=False, default=None)
    render_floats: np.ndarray = field(repr=False, default=None)
    bg_ints: np.ndarray = field(repr=False, default=None)
    bg_floats: np.ndarray = field(repr=False, default=None)


@dataclass
class GeometricRecord:
    flip: bool = False
    dy: int = 0
    dx: int = 0

    def is_identity(self) -> bool:
        return not self.flip and self.dy == 0 and self.dx == 0


@dataclass
class AugmentedView:
    image: np.ndarray
    mode: str  # weak | strong
    geometric_record: GeometricRecord


@dataclass
class ShiftConfig:
    texture_swap: bool = True
    color_gain: tuple = (0.82, 1.0, 0.72)
    color_bias: tuple = (-0.04, 0.0, 0.06)
    noise_sigma: float = 0.02


# palettes --------------------------------------------------------------------

SOURCE_COLORS = np.array([
    (0.85, 0.20, 0.20), (0.20, 0.35, 0.85), (0.18, 0.70, 0.30),
    (0.90, 0.75, 0.15), (0.60, 0.25, 0.75), (0.90, 0.45, 0.15),
])
TARGET_COLORS = np.array([
    (0.55, 0.70, 0.75), (0.75, 0.55, 0.65), (0.45, 0.55, 0.30),
    (0.70, 0.65, 0.45), (0.35, 0.45, 0.60), (0.65, 0.40, 0.35),
])
SOURCE_TEX_WEIGHTS = np.array([0.45, 0.30, 0.15, 0.10])
TARGET_TEX_WEIGHTS = np.array([0.10, 0.15, 0.35, 0.40])

SOURCE_BG = {"base": (0.84, 0.85, 0.88), "accent": (0.79, 0.80, 0.84),
             "tex": TEX_CHECKER, "freq": 0.08}
TARGET_BG = {"base": (0.20, 0.26, 0.21), "accent": (0.25, 0.31, 0.27),
             "tex": TEX_STRIPES, "freq": 0.07}

TEXTURE_SWAP = {TEX_FLAT: TEX_CHECKER, TEX_STRIPES: TEX_DOTS,
                TEX_CHECKER: TEX_FLAT, TEX_DOTS: TEX_STRIPES}

_SHAPE_NAMES = ("circle", "square", "triangle", "blob")


def _texture_freq(kind: int, rng: np.random.Generator) -> float:
    if kind == TEX_STRIPES:
        return rng.uniform(0.10, 0.22)
    if kind == TEX_CHECKER:
        return rng.uniform(0.14, 0.30)
    if kind == TEX_DOTS:
        return rng.uniform(0.12, 0.25)
    return 0.0


def _accent_for(base: np.ndarray) -> np.ndarray:
    delta = -0.35 if base.mean() > 0.5 else 0.35
    return np.clip(base + delta, 0.0, 1.0)


def _polygon_vertices(shape_name: str, cy: float, cx: float, radius: float,
                      rng: np.random.Generator) -> np.ndarray:
    if shape_name == "square":
        n, scale, rot_jit = 4, 1.12, 0.5 * np.pi
    elif shape_name == "triangle":
        n, scale, rot_jit = 3, 1.25, 2.0 * np.pi / 3.0
    else:  # blob: star-convex with jittered radii
        n = int(rng.integers(7, 11))
        scale, rot_jit = 1.0, 2.0 * np.pi / n
    rot = rng.uniform(0.0, rot_jit)
    verts = np.zeros(2 * n)
    for k in range(n):
        ang = rot + 2.0 * np.pi * k / n
        r_k = radius * scale
        if shape_name == "blob":
            ang += rng.uniform(-0.25, 0.25) * 2.0 * np.pi / n
            r_k = radius * rng.uniform(0.7, 1.3)
        verts[2 * k] = cy + r_k * np.sin(ang)
        verts[2 * k + 1] = cx + r_k * np.cos(ang)
    return verts


def _background_row(domain: str):
    bg = SOURCE_BG if domain == "source" else TARGET_BG
    ints = np.zeros(3, dtype=np.int64)
    ints[1] = bg["tex"]
    flt = np.zeros(FLT_STRIDE)
    flt[3:6] = bg["base"]
    flt[6:9] = bg["accent"]
    flt[9], flt[10] = 1.0, 0.0  # texture direction
    flt[11] = bg["freq"]
    flt[12] = 0.25
    return ints, flt


def quantize_image(img: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so PNG persistence is lossless."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def generate_scene(seed: int, spec: SceneSpec) -> SceneSample:
    if spec.max_objects < 1:
        raise ValueError("max_objects must be >= 1")
    if spec.height < 32 or spec.width < 32:
        raise ValueError("scene height and width must be >= 32")
    if not 1 <= spec.min_objects <= spec.max_objects:
        raise ValueError("need 1 <= min_objects <= max_objects")
    if spec.domain not in ("source", "target"):
        raise ValueError(f"unknown domain {spec.domain!r}")

    h, w = spec.height, spec.width
    rng = rng_from(seed, "scene", spec.domain)
    n = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    min_dim = min(h, w)
    colors = SOURCE_COLORS if spec.domain == "source" else TARGET_COLORS
    tex_weights = (SOURCE_TEX_WEIGHTS if spec.domain == "source"
                   else TARGET_TEX_WEIGHTS)

    ints = np.zeros((n, 3), dtype=np.int64)
    floats = np.zeros((n, FLT_STRIDE))
    placed = []  # (cy, cx, radius)
    for i in range(n):
        cy = cx = radius = 0.0
        # progressively relax the separation requirement; overlap is still
        # safe because rasterization keeps masks disjoint (first wins)
        for sep in (1.0, 0.7, 0.0):
            done = False
            for _ in range(40):
                radius = rng.uniform(spec.radius_min, spec.radius_max) * min_dim
                cy = rng.uniform(radius + 1.0, h - radius - 1.0)
                cx = rng.uniform(radius + 1.0, w - radius - 1.0)
                if all(np.hypot(cy - py, cx - px) > (radius + pr) * sep + 1.0
                       for py, px, pr in placed):
                    done = True
                    break
            if done:
                break
        placed.append((cy, cx, radius))

        shape_name = _SHAPE_NAMES[int(rng.integers(0, len(_SHAPE_NAMES)))]
        tex_kind = int(rng.choice(4, p=tex_weights))
        base = np.clip(colors[int(rng.integers(0, len(colors)))]
                       + rng.uniform(-0.08, 0.08, size=3), 0.05, 0.95)
        accent = _accent_for(base)
        theta = rng.uniform(0.0, 2.0 * np.pi)

        row = floats[i]
        row[0], row[1], row[2] = cy, cx, radius
        row[3:6] = base
        row[6:9] = accent
        row[9], row[10] = np.cos(theta), np.sin(theta)
        row[11] = _texture_freq(tex_kind, rng)
        row[12] = rng.uniform(0.0, 2.0)
        ints[i, 1] = tex_kind
        if shape_name == "circle":
            ints[i, 0] = SHAPE_CIRCLE
        else:
            ints[i, 0] = SHAPE_POLYGON
            verts = _polygon_vertices(shape_name, cy, cx, radius, rng)
            ints[i, 2] = verts.size // 2
            row[13:13 + verts.size] = verts

    bg_ints, bg_floats = _background_row(spec.domain)
    img, inst = kernels.render_scene(ints, floats, bg_ints, bg_floats, h, w)
    img = quantize_image(img)

    masks = []
    keep_rows = []
    for i in range(n):
        m = (inst == i + 1).astype(np.uint8)
        if m.any():
            masks.append(m)
            keep_rows.append(i)
    return SceneSample(image=img, instance_masks=masks,
                       object_count=len(masks), seed=int(seed),
                       domain_tag=spec.domain,
                       render_ints=ints[keep_rows], render_floats=floats[keep_rows],
                       bg_ints=bg_ints, bg_floats=bg_floats)


# augmentation ----------------------------------------------------------------

def transport_image(img: np.ndarray, record: GeometricRecord) -> np.ndarray:
    """Apply flip-then-toroidal-shift; exact on the discrete grid."""
    out = img[:, ::-1] if record.flip else img
    if record.dy or record.dx:
        out = np.roll(out, (record.dy, record.dx), axis=(0, 1))
    return np.ascontiguousarray(out)


def transport_mask(mask: np.ndarray, record: GeometricRecord) -> np.ndarray:
    return transport_image(mask, record)


def invert_transport(mask: np.ndarray, record: GeometricRecord) -> np.ndarray:
    out = np.roll(mask, (-record.dy, -record.dx), axis=(0, 1))
    if record.flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(sample: SceneSample, mode: str, seed: int,
            translate_frac: float = 0.05, brightness: float = 0.3,
            contrast: float = 0.3, noise_max: float = 0.05,
            channel_shuffle_p: float = 0.2) -> AugmentedView:
    """Weak = flip + small toroidal translation; strong adds photometrics.

    The geometric draw depends only on (seed), not on mode, so the weak and
    strong views of the same (sample, seed) pair are pixel-aligned and
    pseudo-labels transfer between them without interpolation.
    """
    if mode not in ("weak", "strong"):
        raise ValueError(f"unknown augmentation mode {mode!r}")
    h = sample.image.shape[0]
    geom = rng_from(seed, "aug-geom")
    flip = bool(geom.random() < 0.5)
    max_t = int(round(translate_frac * h))
    dy = int(geom.integers(-max_t, max_t + 1)) if max_t else 0
    dx = int(geom.integers(-max_t, max_t + 1)) if max_t else 0
    record = GeometricRecord(flip=flip, dy=dy, dx=dx)
    img = transport_image(sample.image, record).astype(np.float64)

    if mode == "strong":
        photo = rng_from(seed, "aug-photo")
        b = photo.uniform(-brightness, brightness)
        c = photo.uniform(1.0 - contrast, 1.0 + contrast)
        sigma = photo.uniform(0.0, noise_max)
        img = (img + b - 0.5) * c + 0.5
        img = img + photo.normal(0.0, 1.0, size=img.shape) * sigma
        if photo.random() < channel_shuffle_p:
            img = img[:, :, photo.permutation(3)]
        img = np.clip(img, 0.0, 1.0)
    return AugmentedView(image=np.ascontiguousarray(img), mode=mode,
                         geometric_record=record)


# distribution shift ----------------------------------------------------------

def apply_shift(sample: SceneSample, shift: ShiftConfig) -> SceneSample:
    """Move image statistics without touching geometry; masks unchanged."""
    gain = np.asarray(shift.color_gain, dtype=np.float64)
    bias = np.asarray(shift.color_bias, dtype=np.float64)
    identity = (not shift.texture_swap and shift.noise_sigma == 0.0
                and np.all(gain == 1.0) and np.all(bias == 0.0))
    if identity:
        return replace(sample, image=sample.image.copy(),
                       instance_masks=[m.copy() for m in sample.instance_masks],
                       domain_tag="target")

    img = sample.image
    if shift.texture_swap and sample.render_ints is not None:
        ints = sample.render_ints.copy()
        for i in range(ints.shape[0]):
            ints[i, 1] = TEXTURE_SWAP[int(ints[i, 1])]
        bg_ints = sample.bg_ints.copy()
        bg_ints[1] = TEXTURE_SWAP[int(bg_ints[1])]
        h, w = img.shape[0], img.shape[1]
        img, _ = kernels.render_scene(ints, sample.render_floats,
                                      bg_ints, sample.bg_floats, h, w)
    img = img * gain + bias
    if shift.noise_sigma > 0.0:
        noise_rng = rng_from(sample.seed, "shift-noise")
        img = img + noise_rng.normal(0.0, shift.noise_sigma, size=img.shape)
    img = quantize_image(img)
    return replace(sample, image=img,
                   instance_masks=[m.copy() for m in sample.instance_masks],
                   domain_tag="target")
