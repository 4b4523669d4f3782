"""Segmentation losses and the self-training composite.

All losses take probability grids (already through a sigmoid) against
binary targets and reduce to scalars. Pseudo-label arguments are plain
arrays or detached values, so no gradient ever reaches the anchor or the
teacher; this is asserted structurally by passing them as constants.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DICE_EPS = 1.0
CLIP_LO = 1e-7
CLIP_HI = 1.0 - 1e-7


def _check_pair(p, y):
    p = p if isinstance(p, Tensor) else Tensor(p)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    return p, y


def dice_loss(p, y) -> Tensor:
    """1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps), eps = 1."""
    p, y = _check_pair(p, y)
    if p.data.min() < 0.0 or p.data.max() > 1.0:
        raise ValueError("dice probabilities must lie in [0, 1]")
    inter = ad.sum_(ad.mul(p, y))
    denom = ad.add(ad.add(ad.sum_(p), float(y.sum())), DICE_EPS)
    return ad.sub(1.0, ad.div(ad.add(ad.mul(inter, 2.0), DICE_EPS), denom))


def focal_loss(p, y, gamma: float = 2.0) -> Tensor:
    """Mean of -[y (1-p)^g log p + (1-y) p^g log(1-p)]."""
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    p, y = _check_pair(p, y)
    p = ad.clip(p, CLIP_LO, CLIP_HI)
    one_minus = ad.sub(1.0, p)
    pos = ad.mul(ad.mul(ad.power(one_minus, gamma), ad.log(p)), y)
    neg = ad.mul(ad.mul(ad.power(p, gamma), ad.log(one_minus)), 1.0 - y)
    return ad.mean(ad.sub(0.0, ad.add(pos, neg)))


def bce_loss(p, y) -> Tensor:
    """Mean binary cross-entropy with the same probability clipping."""
    p, y = _check_pair(p, y)
    p = ad.clip(p, CLIP_LO, CLIP_HI)
    pos = ad.mul(ad.log(p), y)
    neg = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - y)
    return ad.mean(ad.sub(0.0, ad.add(pos, neg)))


def binarize_logits(logits) -> np.ndarray:
    """Hard 0/1 pseudo-label from logits (sigmoid threshold 0.5)."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return (data > 0.0).astype(np.float64)


def base_loss(student_logits: Tensor, teacher_logits, anchor_logits) -> Tensor:
    """Self-training consistency loss.

    Dice of student and teacher predictions against the binarized anchor
    (the two dice terms averaged), plus focal of the student against the
    binarized teacher. Teacher and anchor enter as constants.
    """
    anchor_bin = binarize_logits(anchor_logits)
    teacher_bin = binarize_logits(teacher_logits)
    teacher_data = (teacher_logits.data if isinstance(teacher_logits, Tensor)
                    else np.asarray(teacher_logits, dtype=np.float64))

    student_p = ad.sigmoid(student_logits)
    dice_s = dice_loss(student_p, anchor_bin)
    with ad.no_grad():
        dice_t = dice_loss(ad.sigmoid(Tensor(teacher_data)), anchor_bin)
    focal_st = focal_loss(student_p, teacher_bin)
    return ad.add(ad.mul(ad.add(dice_s, float(dice_t.data)), 0.5), focal_st)


def object_loss(object_logits: Tensor, anchor_logits) -> Tensor:
    """Dice + bce of the object-centric mask against the binarized anchor."""
    anchor_bin = binarize_logits(anchor_logits)
    p = ad.sigmoid(object_logits)
    return ad.add(dice_loss(p, anchor_bin), bce_loss(p, anchor_bin))


def supervised_loss(logits: Tensor, target: np.ndarray) -> Tensor:
    """Dice + bce against a known binary target (source-domain training)."""
    p = ad.sigmoid(logits)
    y = np.asarray(target, dtype=np.float64)
    return ad.add(dice_loss(p, y), bce_loss(p, y))
