"""Slot attention: K slots compete over feature tokens, refined by a GRU.

The attention softmax runs over the slot axis (competition for inputs);
each slot then aggregates a weighted mean of values, with the weights
normalized per slot over all inputs. Slots are initialized from a learned
Gaussian (mu, sigma) with explicit Box-Muller noise so tests can
regenerate the draws independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import GRUCell, LayerNorm, Linear, Module, Parameter
from .rng import rng_from, seeded_normal


@dataclass
class SlotSet:
    slots: Tensor  # (K, D_s)
    iteration_index: int = 0


@dataclass
class AttentionMap:
    attn: np.ndarray  # (N, K); every row sums to 1 (softmax over slots)
    weights: np.ndarray  # (N, K); every column sums to 1 (per-slot norm)


class SlotModule(Module):
    """Projections start as a soft k-means: identity keys/values, a sharp
    identity query (gain > 1 hardens the first competition round so slots
    do not collapse onto the feature mean) and a pass-through GRU whose
    update gate opens toward the aggregated input. Random init instead
    when d_feat != d_slot rules out identity maps."""

    def __init__(self, d_feat: int, d_slot: int, seed: int,
                 query_gain: float = 8.0):
        super().__init__()
        rng = rng_from(seed, "slot-module")
        self.d_feat = d_feat
        self.d_slot = d_slot
        self.query_gain = query_gain
        self.mu = Parameter(np.zeros(d_slot))
        self.log_sigma = Parameter(np.zeros(d_slot))
        self.norm_feat = LayerNorm(d_feat)
        self.norm_slot = LayerNorm(d_slot)
        self.q_proj = Linear(d_slot, d_slot, rng)
        self.k_proj = Linear(d_feat, d_slot, rng)
        self.v_proj = Linear(d_feat, d_slot, rng)
        self.gru = GRUCell(d_slot, d_slot, rng)
        if d_feat == d_slot:
            self._kmeans_init()

    def _kmeans_init(self):
        d = self.d_slot
        eye = np.eye(d)
        self.q_proj.weight.data[:] = eye * self.query_gain
        self.q_proj.bias.data[:] = 0.0
        self.k_proj.weight.data[:] = eye
        self.v_proj.weight.data[:] = eye
        g = self.gru
        # update gate ~0 everywhere: new slot ~= candidate state
        g.w_ih.data[:, d:2 * d] = 0.0
        g.w_hh.data[:, d:2 * d] = 0.0
        g.b_ih.data[d:2 * d] = -4.0
        # candidate = tanh(update): the slot tracks its weighted input mean
        g.w_ih.data[:, 2 * d:] = eye
        g.w_hh.data[:, 2 * d:] = 0.0


def init_slots(params: SlotModule, k: int, seed: int) -> SlotSet:
    """slots[i] = mu + sigma * eps_i, eps ~ N(0, 1) from the given seed."""
    if k < 1:
        raise ValueError("slot count must be >= 1")
    eps = seeded_normal(seed, (k, params.d_slot))
    sigma = ad.clip(ad.exp(params.log_sigma), 1e-8, np.inf)
    slots = ad.add(params.mu, ad.mul(sigma, eps))
    return SlotSet(slots=slots, iteration_index=0)


def attention_step(params: SlotModule, slot_set: SlotSet,
                   features) -> tuple:
    """One competition round; returns (new SlotSet, AttentionMap)."""
    feats = features if isinstance(features, Tensor) else Tensor(features)
    if feats.shape[1] != params.d_feat:
        raise ValueError(f"feature dim {feats.shape[1]} != {params.d_feat}")
    slots = slot_set.slots
    if slots.shape[1] != params.d_slot:
        raise ValueError(f"slot dim {slots.shape[1]} != {params.d_slot}")

    z = params.norm_feat(feats)
    k = params.k_proj(z)  # (N, D_s)
    v = params.v_proj(z)  # (N, D_s)
    q = params.q_proj(params.norm_slot(slots))  # (K, D_s)

    logits = ad.mul(ad.matmul(k, ad.transpose(q, (1, 0))),
                    1.0 / np.sqrt(params.d_slot))  # (N, K)
    attn = ad.softmax(logits, axis=1)  # competition over slots
    col_sums = ad.sum_(attn, axis=0, keepdims=True)  # (1, K)
    weights = ad.div(attn, col_sums)  # weighted-mean normalization
    updates = ad.matmul(ad.transpose(weights, (1, 0)), v)  # (K, D_s)
    new_slots = params.gru(updates, slots)
    return (SlotSet(slots=new_slots, iteration_index=slot_set.iteration_index + 1),
            AttentionMap(attn=attn.data.copy(), weights=weights.data.copy()))


def run_slot_attention(params: SlotModule, features, k: int, t: int,
                       seed: int) -> tuple:
    """Initialize slots, then apply t attention steps."""
    if t < 1:
        raise ValueError("iteration count must be >= 1")
    slot_set = init_slots(params, k, seed)
    attn_map = None
    for _ in range(t):
        slot_set, attn_map = attention_step(params, slot_set, features)
    return slot_set, attn_map
