"""Spatial-broadcast decoding of slots into feature reconstructions.

Each slot is copied to every grid position, learned positional encodings
are added, and a shared MLP maps each (slot, position) pair to feature
channels plus an alpha logit. A softmax over slots turns the alphas into
a partition of unity; the combined reconstruction is the mask-weighted
sum of per-slot features and is trained to match the frozen encoder's
output tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, Module, Parameter, sinusoidal_grid
from .rng import rng_from


@dataclass
class SlotReconstruction:
    per_slot: Tensor  # (K, N, D_z)
    alpha: Tensor  # (K, N)
    masks: Tensor = None  # (K, N), softmax over slots; filled by combine
    combined: Tensor = None  # (N, D_z); filled by combine


class SlotDecoder(Module):
    """The MLP starts as an exact identity on the slot vector: the first
    layer splits x into (relu(x), relu(-x)) and later layers recombine the
    pair, so each slot initially reconstructs itself at every position.
    Positional codes and alpha logits start at zero; a position-independent
    start keeps the reconstruction tied to slot content rather than to a
    per-position lookup. Random init when the dims rule the identity out."""

    def __init__(self, grid: tuple, d_slot: int, d_feat: int, seed: int,
                 hidden: int = 128):
        super().__init__()
        rng = rng_from(seed, "slot-decoder")
        self.grid = tuple(grid)
        self.d_slot = d_slot
        self.d_feat = d_feat
        n = grid[0] * grid[1]
        self.n_positions = n
        # learned positional table over grid positions
        self.pos = Parameter(sinusoidal_grid(grid[0], grid[1], d_slot))
        self.mlp = MLP([d_slot, hidden, hidden, hidden, d_feat + 1], rng)
        if d_feat == d_slot and hidden >= 2 * d_slot:
            self._identity_init()

    def _identity_init(self):
        d = self.d_slot
        eye = np.eye(d)
        layers = self.mlp.layers
        first = np.zeros_like(layers[0].weight.data)
        first[:, :d] = eye
        first[:, d:2 * d] = -eye
        layers[0].weight.data[:] = first
        layers[0].bias.data[:] = 0.0
        # (a, b) -> (relu(a - b), relu(b - a)) keeps the pair encoding stable
        block = np.block([[eye, -eye], [-eye, eye]])
        for li in (1, 2):
            mid = np.zeros_like(layers[li].weight.data)
            mid[:2 * d, :2 * d] = block
            layers[li].weight.data[:] = mid
            layers[li].bias.data[:] = 0.0
        last = np.zeros_like(layers[3].weight.data)
        last[:d, :d] = eye
        last[d:2 * d, :d] = -eye  # alpha column stays zero
        layers[3].weight.data[:] = last
        layers[3].bias.data[:] = 0.0
        self.pos.data[:] = 0.0


def broadcast_decode(dec: SlotDecoder, slot_set) -> SlotReconstruction:
    slots = slot_set.slots
    k = slots.shape[0]
    if slots.shape[1] != dec.d_slot:
        raise ValueError(f"slot dim {slots.shape[1]} != decoder {dec.d_slot}")
    n = dec.n_positions
    tiles = ad.add(ad.reshape(slots, (k, 1, dec.d_slot)),
                   ad.reshape(dec.pos, (1, n, dec.d_slot)))  # (K, N, D_s)
    out = dec.mlp(tiles)  # (K, N, D_z + 1)
    per_slot = out[:, :, :dec.d_feat]
    alpha = out[:, :, dec.d_feat]
    return SlotReconstruction(per_slot=per_slot, alpha=alpha)


def combine(parts: SlotReconstruction) -> SlotReconstruction:
    """Fill masks (softmax over slots) and the weighted reconstruction."""
    masks = ad.softmax(parts.alpha, axis=0)  # (K, N)
    k, n = masks.shape
    weighted = ad.mul(parts.per_slot, ad.reshape(masks, (k, n, 1)))
    combined = ad.sum_(weighted, axis=0)  # (N, D_z)
    return SlotReconstruction(per_slot=parts.per_slot, alpha=parts.alpha,
                              masks=masks, combined=combined)


def reconstruction_loss(z_hat, z) -> Tensor:
    """Mean squared error over all entries."""
    z_const = z if isinstance(z, Tensor) else Tensor(z)
    if z_hat.shape != z_const.shape:
        raise ValueError(f"shape mismatch {z_hat.shape} vs {z_const.shape}")
    diff = ad.sub(z_hat, z_const)
    return ad.mean(ad.mul(diff, diff))


def decode_slot_masks(dec: SlotDecoder, slot_set) -> np.ndarray:
    """Convenience: (K, grid_h, grid_w) slot masks as plain arrays."""
    with ad.no_grad():
        parts = combine(broadcast_decode(dec, slot_set))
    k = parts.masks.shape[0]
    return parts.masks.data.reshape(k, dec.grid[0], dec.grid[1]).copy()
