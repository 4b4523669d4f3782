"""Dataset generation and on-disk layout.

A run directory holds `data/<split>/images/*.png`, `data/<split>/masks/*.png`
(instance id maps, 0 = background), `data/<split>/meta.jsonl`, and a
top-level `data/manifest.json` recording split sizes, per-sample seeds and
the generating config hash. Images are quantized to the 8-bit grid at
generation time, so the PNG round trip is lossless.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .config import Config, scene_spec, shift_config
from .rng import seed_from
from .scenes import SceneSample, apply_shift, generate_scene

SPLITS = (
    ("source_train", "source", "data.source_train"),
    ("source_eval", "source", "data.source_eval"),
    ("target_train", "target", "data.target_train"),
    ("target_val", "target", "data.target_val"),
    ("target_eval", "target", "data.target_eval"),
)


class DataError(RuntimeError):
    pass


def data_dir(run_dir) -> Path:
    return Path(run_dir) / "data"


def _image_to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(image * 255.0).astype(np.uint8)


def _instance_map(sample: SceneSample) -> np.ndarray:
    inst = np.zeros(sample.image.shape[:2], dtype=np.uint8)
    for i, mask in enumerate(sample.instance_masks):
        inst[mask.astype(bool)] = i + 1
    return inst


def save_split(split_dir: Path, samples):
    images = split_dir / "images"
    masks = split_dir / "masks"
    images.mkdir(parents=True, exist_ok=True)
    masks.mkdir(parents=True, exist_ok=True)
    with open(split_dir / "meta.jsonl", "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            Image.fromarray(_image_to_uint8(sample.image)).save(
                images / f"{i:05d}.png")
            Image.fromarray(_instance_map(sample)).save(
                masks / f"{i:05d}.png")
            fh.write(json.dumps({"id": i, "seed": sample.seed,
                                 "domain": sample.domain_tag,
                                 "object_count": sample.object_count},
                                sort_keys=True) + "\n")


def load_split(run_dir, split: str):
    split_dir = data_dir(run_dir) / split
    meta_path = split_dir / "meta.jsonl"
    if not meta_path.exists():
        raise DataError(f"missing split {split!r} under {run_dir}; "
                        f"run gen-data first")
    samples = []
    with open(meta_path, "r", encoding="utf-8") as fh:
        for line in fh:
            meta = json.loads(line)
            i = meta["id"]
            image = np.asarray(Image.open(split_dir / "images" / f"{i:05d}.png"),
                               dtype=np.float64) / 255.0
            inst = np.asarray(Image.open(split_dir / "masks" / f"{i:05d}.png"))
            count = meta["object_count"]
            inst_masks = [(inst == k + 1).astype(np.uint8)
                          for k in range(count)]
            samples.append(SceneSample(
                image=image, instance_masks=inst_masks, object_count=count,
                seed=meta["seed"], domain_tag=meta["domain"],
                render_ints=None, render_floats=None,
                bg_ints=None, bg_floats=None))
    return samples


def _build_sample(seed: int, domain: str, cfg: Config) -> SceneSample:
    sample = generate_scene(seed, scene_spec(cfg, domain))
    if domain == "target":
        sample = apply_shift(sample, shift_config(cfg))
    return sample


def generate_datasets(cfg: Config, run_dir, force: bool = False) -> dict:
    root = data_dir(run_dir)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise DataError(f"data already present under {run_dir}; "
                            f"pass --force to regenerate")
        shutil.rmtree(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": cfg.hash, "splits": {}}
    for split, domain, size_key in SPLITS:
        count = cfg[size_key]
        seeds = [seed_from(cfg["seed"], "data", split, i)
                 for i in range(count)]
        samples = [_build_sample(s, domain, cfg) for s in seeds]
        save_split(root / split, samples)
        manifest["splits"][split] = {"count": count, "domain": domain,
                                     "seeds": seeds}
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


def load_manifest(run_dir) -> dict:
    path = data_dir(run_dir) / "manifest.json"
    if not path.exists():
        raise DataError(f"missing data manifest under {run_dir}; "
                        f"run gen-data first")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def check_manifest(cfg: Config, run_dir):
    manifest = load_manifest(run_dir)
    if manifest["config_hash"] != cfg.hash:
        raise DataError(
            f"data under {run_dir} was generated with a different config "
            f"(hash {manifest['config_hash'][:12]}, expected "
            f"{cfg.hash[:12]}); regenerate with gen-data --force")
    return manifest
