"""Per-pixel rasterization kernels, in numba and pure-numpy builds.

These are the hot inner loops of scene generation and prompt synthesis:
filling textured sprites into an image and rasterizing polygons. Every
kernel exists twice — ``*_numba`` (scalar loops under ``@njit``) and
``*_numpy`` (vectorized) — computing identical float expressions, so the
two builds agree bitwise. ``slotseg.backend`` picks the default build.

Texture and inside tests use only +,-,*,/ ,floor and comparisons (no libm
calls), which keeps cross-build bitwise equality achievable.

Object encoding (one row per sprite):
  ints[i]   = (shape_kind, tex_kind, n_vertices)
                shape_kind: 0 circle, 1 polygon
                tex_kind:   0 flat, 1 stripes, 2 checker, 3 dots
  floats[i] = (cy, cx, radius,
               base_r, base_g, base_b, acc_r, acc_g, acc_b,
               tex_ax, tex_ay, tex_freq, tex_phase,
               y0, x0, y1, x1, ... up to MAX_VERTICES pairs)
"""

from __future__ import annotations

import numpy as np

from .backend import NUMBA_ENABLED

MAX_VERTICES = 12
FLT_STRIDE = 13 + 2 * MAX_VERTICES

SHAPE_CIRCLE = 0
SHAPE_POLYGON = 1

TEX_FLAT = 0
TEX_STRIPES = 1
TEX_CHECKER = 2
TEX_DOTS = 3


# ---------------------------------------------------------------------------
# pure-numpy build
# ---------------------------------------------------------------------------

def _tex_select_numpy(kind, px, py, ax, ay, freq, phase):
    """Texture indicator in {0,1} per pixel; px/py are pixel-center coords."""
    if kind == TEX_FLAT:
        return np.zeros(px.shape, dtype=bool)
    if kind == TEX_STRIPES:
        t = np.floor((px * ax + py * ay) * freq + phase)
        return (t.astype(np.int64) & 1) == 1
    if kind == TEX_CHECKER:
        t = np.floor(px * freq + phase) + np.floor(py * freq + phase)
        return (t.astype(np.int64) & 1) == 1
    if kind == TEX_DOTS:
        fx = px * freq + phase
        fx = fx - np.floor(fx) - 0.5
        fy = py * freq + phase
        fy = fy - np.floor(fy) - 0.5
        return fx * fx + fy * fy < 0.09
    raise ValueError(f"unknown texture kind {kind}")


def _poly_inside_numpy(verts, n_verts, px, py):
    inside = np.zeros(px.shape, dtype=bool)
    j = n_verts - 1
    for i in range(n_verts):
        y1, x1 = verts[2 * i], verts[2 * i + 1]
        y2, x2 = verts[2 * j], verts[2 * j + 1]
        if y1 != y2:
            cond = (y1 <= py) != (y2 <= py)
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= cond & (px < xint)
        j = i
    return inside


def fill_polygon_numpy(verts: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterize a polygon given as (V, 2) array of (y, x) vertices."""
    v = np.ascontiguousarray(verts, dtype=np.float64).reshape(-1)
    n = v.size // 2
    py, px = np.indices((height, width), dtype=np.float64)
    py += 0.5
    px += 0.5
    return _poly_inside_numpy(v, n, px, py).astype(np.uint8)


def render_scene_numpy(ints: np.ndarray, floats: np.ndarray,
                       bg_int: np.ndarray, bg_flt: np.ndarray,
                       height: int, width: int):
    """Rasterize sprites over a textured background.

    Returns (image float64 (H, W, 3) in [0, 1], instance map uint8 (H, W)
    with 0 = background and i+1 = sprite i).
    """
    n = ints.shape[0]
    py, px = np.indices((height, width), dtype=np.float64)
    py += 0.5
    px += 0.5

    inst = np.zeros((height, width), dtype=np.uint8)
    for i in range(n):
        shape_kind = int(ints[i, 0])
        cy, cx, rad = floats[i, 0], floats[i, 1], floats[i, 2]
        if shape_kind == SHAPE_CIRCLE:
            inside = (px - cx) ** 2 + (py - cy) ** 2 <= rad * rad
        else:
            inside = _poly_inside_numpy(floats[i, 13:], int(ints[i, 2]), px, py)
        inst = np.where((inst == 0) & inside, np.uint8(i + 1), inst)

    img = np.empty((height, width, 3), dtype=np.float64)
    bg_tex = _tex_select_numpy(int(bg_int[1]), px, py,
                               bg_flt[9], bg_flt[10], bg_flt[11], bg_flt[12])
    for ch in range(3):
        img[:, :, ch] = np.where(bg_tex, bg_flt[6 + ch], bg_flt[3 + ch])

    for i in range(n):
        owner = inst == i + 1
        if not owner.any():
            continue
        tex = _tex_select_numpy(int(ints[i, 1]), px, py,
                                floats[i, 9], floats[i, 10],
                                floats[i, 11], floats[i, 12])
        for ch in range(3):
            vals = np.where(tex, floats[i, 6 + ch], floats[i, 3 + ch])
            img[:, :, ch] = np.where(owner, vals, img[:, :, ch])
    return img, inst


# ---------------------------------------------------------------------------
# numba build
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def _tex_value_nb(kind, px, py, ax, ay, freq, phase):
        if kind == TEX_FLAT:
            return False
        if kind == TEX_STRIPES:
            t = np.floor((px * ax + py * ay) * freq + phase)
            return (np.int64(t) & 1) == 1
        if kind == TEX_CHECKER:
            t = np.floor(px * freq + phase) + np.floor(py * freq + phase)
            return (np.int64(t) & 1) == 1
        fx = px * freq + phase
        fx = fx - np.floor(fx) - 0.5
        fy = py * freq + phase
        fy = fy - np.floor(fy) - 0.5
        return fx * fx + fy * fy < 0.09

    @njit(cache=True)
    def _poly_inside_nb(verts, n_verts, px, py):
        inside = False
        j = n_verts - 1
        for i in range(n_verts):
            y1, x1 = verts[2 * i], verts[2 * i + 1]
            y2, x2 = verts[2 * j], verts[2 * j + 1]
            if y1 != y2:
                if (y1 <= py) != (y2 <= py):
                    xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                    if px < xint:
                        inside = not inside
            j = i
        return inside

    @njit(cache=True)
    def _fill_polygon_nb(verts, height, width):
        out = np.zeros((height, width), dtype=np.uint8)
        n = verts.size // 2
        for r in range(height):
            py = r + 0.5
            for c in range(width):
                px = c + 0.5
                if _poly_inside_nb(verts, n, px, py):
                    out[r, c] = 1
        return out

    @njit(cache=True)
    def _render_scene_nb(ints, floats, bg_int, bg_flt, height, width):
        n = ints.shape[0]
        img = np.empty((height, width, 3), dtype=np.float64)
        inst = np.zeros((height, width), dtype=np.uint8)
        for r in range(height):
            py = r + 0.5
            for c in range(width):
                px = c + 0.5
                owner = -1
                for i in range(n):
                    if ints[i, 0] == SHAPE_CIRCLE:
                        dy = py - floats[i, 0]
                        dx = px - floats[i, 1]
                        hit = dy * dy + dx * dx <= floats[i, 2] * floats[i, 2]
                    else:
                        hit = _poly_inside_nb(floats[i, 13:], ints[i, 2], px, py)
                    if hit:
                        owner = i
                        break
                if owner < 0:
                    tex = _tex_value_nb(bg_int[1], px, py, bg_flt[9],
                                        bg_flt[10], bg_flt[11], bg_flt[12])
                    base = 6 if tex else 3
                    for ch in range(3):
                        img[r, c, ch] = bg_flt[base + ch]
                else:
                    inst[r, c] = owner + 1
                    tex = _tex_value_nb(ints[owner, 1], px, py,
                                        floats[owner, 9], floats[owner, 10],
                                        floats[owner, 11], floats[owner, 12])
                    base = 6 if tex else 3
                    for ch in range(3):
                        img[r, c, ch] = floats[owner, base + ch]
        return img, inst

    def fill_polygon_numba(verts: np.ndarray, height: int, width: int) -> np.ndarray:
        v = np.ascontiguousarray(verts, dtype=np.float64).reshape(-1)
        return _fill_polygon_nb(v, height, width)

    def render_scene_numba(ints, floats, bg_int, bg_flt, height, width):
        return _render_scene_nb(np.ascontiguousarray(ints, dtype=np.int64),
                                np.ascontiguousarray(floats, dtype=np.float64),
                                np.ascontiguousarray(bg_int, dtype=np.int64),
                                np.ascontiguousarray(bg_flt, dtype=np.float64),
                                height, width)

    fill_polygon = fill_polygon_numba
    render_scene = render_scene_numba
else:  # pure-numpy fallback
    fill_polygon_numba = None
    render_scene_numba = None
    fill_polygon = fill_polygon_numpy
    render_scene = render_scene_numpy
