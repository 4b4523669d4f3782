"""Rasterization kernels: numpy/numba build agreement, texture and polygon
semantics, and the environment switch."""

import os
import subprocess
import sys

import numpy as np
import pytest

from slotseg import kernels
from slotseg.backend import HAVE_NUMBA, NUMBA_ENABLED
from slotseg.kernels import (FLT_STRIDE, SHAPE_CIRCLE, SHAPE_POLYGON,
                             TEX_CHECKER, TEX_DOTS, TEX_FLAT, TEX_STRIPES,
                             fill_polygon_numpy, render_scene_numpy)

needs_numba = pytest.mark.skipif(not NUMBA_ENABLED,
                                 reason="numba build not selected")


def random_objects(rng, n, height, width):
    ints = np.zeros((n, 3), dtype=np.int64)
    floats = np.zeros((n, FLT_STRIDE))
    for i in range(n):
        shape = int(rng.integers(0, 2))
        ints[i, 0] = shape
        ints[i, 1] = int(rng.integers(0, 4))
        cy = rng.uniform(8, height - 8)
        cx = rng.uniform(8, width - 8)
        rad = rng.uniform(4, 10)
        floats[i, 0:3] = (cy, cx, rad)
        floats[i, 3:6] = rng.uniform(0.1, 0.9, size=3)
        floats[i, 6:9] = rng.uniform(0.1, 0.9, size=3)
        theta = rng.uniform(0, 2 * np.pi)
        floats[i, 9:11] = (np.cos(theta), np.sin(theta))
        floats[i, 11] = rng.uniform(0.05, 0.3)
        floats[i, 12] = rng.uniform(0, 2)
        if shape == SHAPE_POLYGON:
            v = int(rng.integers(3, 9))
            ints[i, 2] = v
            ang = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(v) / v
            floats[i, 13:13 + 2 * v:2] = cy + rad * np.sin(ang)
            floats[i, 14:14 + 2 * v:2] = cx + rad * np.cos(ang)
    bg_ints = np.array([0, int(rng.integers(0, 4)), 0], dtype=np.int64)
    bg_flt = np.zeros(FLT_STRIDE)
    bg_flt[3:9] = rng.uniform(0.1, 0.9, size=6)
    bg_flt[9:13] = (1.0, 0.0, rng.uniform(0.05, 0.2), rng.uniform(0, 2))
    return ints, floats, bg_ints, bg_flt


def test_circle_rasterization_is_centered_disk():
    ints = np.array([[SHAPE_CIRCLE, TEX_FLAT, 0]], dtype=np.int64)
    floats = np.zeros((1, FLT_STRIDE))
    floats[0, 0:3] = (16.0, 16.0, 6.0)
    floats[0, 3:6] = (1.0, 0.0, 0.0)
    bg_ints = np.zeros(3, dtype=np.int64)
    bg_flt = np.zeros(FLT_STRIDE)
    img, inst = render_scene_numpy(ints, floats, bg_ints, bg_flt, 32, 32)
    py, px = np.indices((32, 32), dtype=np.float64)
    expected = ((px + 0.5 - 16) ** 2 + (py + 0.5 - 16) ** 2 <= 36.0)
    assert np.array_equal(inst == 1, expected)
    assert np.all(img[inst == 1] == (1.0, 0.0, 0.0))
    assert np.all(img[inst == 0] == 0.0)


def test_first_sprite_wins_overlap():
    ints = np.array([[SHAPE_CIRCLE, TEX_FLAT, 0],
                     [SHAPE_CIRCLE, TEX_FLAT, 0]], dtype=np.int64)
    floats = np.zeros((2, FLT_STRIDE))
    floats[0, 0:3] = (16.0, 14.0, 6.0)
    floats[1, 0:3] = (16.0, 18.0, 6.0)
    bg_ints = np.zeros(3, dtype=np.int64)
    bg_flt = np.zeros(FLT_STRIDE)
    _, inst = render_scene_numpy(ints, floats, bg_ints, bg_flt, 32, 32)
    assert (inst == 1).any() and (inst == 2).any()
    # overlap column belongs entirely to sprite 0
    assert np.all(inst[16, 12:16] == 1)


def test_fill_polygon_square_area():
    verts = np.array([[4.0, 4.0], [4.0, 12.0], [12.0, 12.0], [12.0, 4.0]])
    mask = fill_polygon_numpy(verts, 16, 16)
    # pixel centers strictly inside the [4, 12) box
    assert mask.sum() == 64
    assert mask[5, 5] == 1 and mask[3, 5] == 0


def test_fill_polygon_triangle_winding_invariant():
    tri = np.array([[2.0, 2.0], [2.0, 14.0], [14.0, 8.0]])
    cw = fill_polygon_numpy(tri, 16, 16)
    ccw = fill_polygon_numpy(tri[::-1], 16, 16)
    assert np.array_equal(cw, ccw)
    assert cw.any()


def test_texture_kinds_produce_distinct_partitions():
    ints = np.array([[SHAPE_CIRCLE, TEX_FLAT, 0]], dtype=np.int64)
    floats = np.zeros((1, FLT_STRIDE))
    floats[0, 0:3] = (16.0, 16.0, 12.0)
    floats[0, 3:6] = (1.0, 1.0, 1.0)
    floats[0, 6:9] = (0.0, 0.0, 0.0)
    floats[0, 9:13] = (1.0, 0.0, 0.2, 0.1)
    bg_ints = np.zeros(3, dtype=np.int64)
    bg_flt = np.zeros(FLT_STRIDE)
    images = {}
    for tex in (TEX_FLAT, TEX_STRIPES, TEX_CHECKER, TEX_DOTS):
        ints[0, 1] = tex
        img, _ = render_scene_numpy(ints, floats, bg_ints, bg_flt, 32, 32)
        images[tex] = img
    assert np.all(images[TEX_FLAT][16, 16] == 1.0)  # flat: base color only
    keys = list(images)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            assert not np.array_equal(images[a], images[b])


@needs_numba
def test_render_scene_builds_agree_bitwise():
    rng = np.random.default_rng(0)
    for trial in range(8):
        n = int(rng.integers(1, 6))
        ints, floats, bg_ints, bg_flt = random_objects(rng, n, 48, 40)
        img_np, inst_np = render_scene_numpy(ints, floats, bg_ints, bg_flt,
                                             48, 40)
        img_nb, inst_nb = kernels.render_scene_numba(ints, floats, bg_ints,
                                                     bg_flt, 48, 40)
        assert np.array_equal(inst_np, inst_nb)
        assert img_np.tobytes() == img_nb.tobytes()


@needs_numba
def test_fill_polygon_builds_agree_bitwise():
    rng = np.random.default_rng(1)
    for trial in range(20):
        v = int(rng.integers(3, 11))
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=v))
        rad = rng.uniform(3, 14, size=v)
        verts = np.empty(2 * v)
        verts[0::2] = 20 + rad * np.sin(ang)
        verts[1::2] = 20 + rad * np.cos(ang)
        a = fill_polygon_numpy(verts, 40, 40)
        b = kernels.fill_polygon_numba(verts, 40, 40)
        assert np.array_equal(a, b)


def test_env_flag_selects_numpy_build():
    code = ("import slotseg.backend as b, slotseg.kernels as k; "
            "print(b.numba_enabled(), "
            "k.render_scene is k.render_scene_numpy)")
    env = dict(os.environ, SLOTSEG_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")
def test_env_flag_enables_numba_build():
    code = ("import slotseg.backend as b, slotseg.kernels as k; "
            "print(b.numba_enabled(), k.render_scene_numba is not None, "
            "k.render_scene is k.render_scene_numba)")
    env = dict(os.environ, SLOTSEG_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "True", "True"]
