"""Timing comparison of the numba and numpy scene-render kernels.

Usage: python3 benchmarks/bench_kernels.py [--scenes N] [--size HxW]

Renders the same batch of scenes through both kernel builds (when numba is
available), checks the outputs are bitwise equal, and prints a table of
per-scene times. The package-level dispatch is controlled by the
SLOTSEG_NUMBA environment variable; this script calls both builds directly
so a single process can compare them.
"""

import argparse
import time

import numpy as np

from slotseg import kernels
from slotseg.config import Config, scene_spec
from slotseg.rng import seed_from
from slotseg.scenes import generate_scene


def render_batch(fn, scenes, height, width):
    start = time.perf_counter()
    outputs = [fn(s.render_ints, s.render_floats, s.bg_ints, s.bg_floats,
                  height, width) for s in scenes]
    return time.perf_counter() - start, outputs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenes", type=int, default=64)
    parser.add_argument("--size", default="64x64")
    args = parser.parse_args()
    height, width = (int(v) for v in args.size.split("x"))

    cfg = Config({"scene.height": height, "scene.width": width})
    spec = scene_spec(cfg, "source")
    scenes = [generate_scene(seed_from(0, "bench", i), spec)
              for i in range(args.scenes)]

    builds = [("numpy", kernels.render_scene_numpy)]
    if kernels.render_scene_numba is not None:
        # trigger compilation outside the timed region
        s = scenes[0]
        kernels.render_scene_numba(s.render_ints, s.render_floats,
                                   s.bg_ints, s.bg_floats, height, width)
        builds.append(("numba", kernels.render_scene_numba))

    results = {}
    outputs = {}
    for name, fn in builds:
        elapsed, outs = render_batch(fn, scenes, height, width)
        results[name] = elapsed
        outputs[name] = outs

    print(f"render_scene, {args.scenes} scenes at {height}x{width}:")
    for name in results:
        per = results[name] / args.scenes * 1e3
        print(f"  {name:6s} {results[name]:8.4f} s total  {per:8.3f} ms/scene")
    if len(builds) == 2:
        speedup = results["numpy"] / results["numba"]
        print(f"  speedup (numpy/numba): {speedup:.1f}x")
        equal = all(
            np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            for a, b in zip(outputs["numpy"], outputs["numba"]))
        print(f"  builds bitwise equal: {equal}")
    else:
        print("  numba unavailable; timed the numpy build only")


if __name__ == "__main__":
    main()
