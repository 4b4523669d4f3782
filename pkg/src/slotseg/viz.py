"""Visualization panels: input, per-slot heatmaps, predicted and true masks.

Panels are plain uint8 arrays assembled with numpy and written with PIL, so
the same model state and sample always produce byte-identical PNGs.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .autodiff import Tensor, no_grad
from .encoder import encode
from .evaluation import _predicted_mask
from .metrics import bilinear_upsample
from .model import forward_from_features
from .prompts import derive_prompt
from .rng import seed_from
from .slot_decoder import decode_slot_masks
from .slots import run_slot_attention

GAP = 2
PRED_COLOR = np.array([1.0, 0.25, 0.2])
GT_COLOR = np.array([0.2, 0.9, 0.3])


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _overlay(image: np.ndarray, mask: np.ndarray,
             color: np.ndarray) -> np.ndarray:
    m = mask.astype(np.float64)[:, :, None]
    return image * (1.0 - 0.55 * m) + color[None, None, :] * 0.55 * m


def panel(image: np.ndarray, slot_masks: np.ndarray, pred_mask: np.ndarray,
          gt_mask: np.ndarray) -> np.ndarray:
    """Tile [input | slot heatmaps... | prediction | ground truth].

    slot_masks: (K, H, W) in [0, 1]; returns (H, (K + 3) * (W + GAP), 3)
    uint8 with white gutters between tiles.
    """
    h, w = image.shape[:2]
    tiles = [image]
    for k in range(slot_masks.shape[0]):
        heat = np.clip(slot_masks[k], 0.0, 1.0)
        tiles.append(np.repeat(heat[:, :, None], 3, axis=2))
    tiles.append(_overlay(image, pred_mask, PRED_COLOR))
    tiles.append(_overlay(image, gt_mask, GT_COLOR))
    out = np.ones((h, len(tiles) * (w + GAP) - GAP, 3))
    for i, tile in enumerate(tiles):
        out[:, i * (w + GAP):i * (w + GAP) + w] = tile
    return _to_uint8(out)


def visualize_sample(model, enc, sample, cfg, instance: int = 0,
                     with_object: bool = True) -> np.ndarray:
    """Panel for one sample using a jitter-free box prompt."""
    h, w = sample.image.shape[:2]
    with no_grad():
        fm, detail = encode(enc, sample.image)
        slot_seed = seed_from(sample.seed, "eval-slots")
        prompt = derive_prompt(sample.instance_masks[instance], "box",
                               seed_from(sample.seed, "viz-prompt", instance),
                               jitter=0.0, target_index=instance)
        out = forward_from_features(model, fm, detail, prompt, slot_seed,
                                    with_object=with_object)
        slot_set, _ = run_slot_attention(model.slot, Tensor(fm.tokens),
                                         model.arch.k, model.arch.t_iters,
                                         slot_seed)
        masks = decode_slot_masks(model.slotdec, slot_set)
    slot_up = np.stack([bilinear_upsample(m, h, w) for m in masks])
    pred = _predicted_mask(out["mask"].data, h, w, cfg["eval.threshold"])
    return panel(sample.image, slot_up, pred, sample.instance_masks[instance])


def save_panel(path, array: np.ndarray):
    Image.fromarray(array).save(path)
