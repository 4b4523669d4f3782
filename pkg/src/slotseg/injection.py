"""Promptable mask decoding with an injected object token.

The decoder is a small two-way transformer: a token set (learned output
tokens, prompt tokens, and optionally one object token distilled from the
slots) attends to itself, then to the image tokens, runs through a shared
feed-forward layer, and the image tokens attend back. The mask logit at a
pixel is the dot product of a token with an upsampled per-pixel feature:
the first output token against decoder mask features for the main mask,
the object token against fused encoder features for the object-centric
mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import DetailFeature, FeatureMap
from .losses import object_loss  # noqa: F401  (part of this module's interface)
from .nn import (Conv3x3, ConvTranspose2x2, LayerNorm, MLP, Module,
                 ModuleList, MultiHeadAttention, Parameter, sinusoidal_grid,
                 sinusoidal_position)
from .prompts import Prompt
from .rng import rng_from


@dataclass
class PromptEmbedding:
    kind: str
    tokens: Tensor = None  # (n, D) sparse prompt tokens (box, point)
    dense: Tensor = None  # (N, D) additive image-feature term (poly)


@dataclass
class FusedObjectFeature:
    grid: Tensor  # (2*grid_h, 2*grid_w, D)


@dataclass
class MaskLogits:
    logits: np.ndarray  # (H', W')
    role: str  # anchor | student | teacher | object_centric


class PromptEncoder(Module):
    def __init__(self, dim: int, patch: int, grid: tuple, seed: int):
        super().__init__()
        rng = rng_from(seed, "prompt-encoder")
        self.dim = dim
        self.patch = patch
        self.grid = tuple(grid)
        self.corner_embed = Parameter(rng.normal(0.0, 0.5, size=(2, dim)))
        self.point_embed = Parameter(rng.normal(0.0, 0.5, size=(1, dim)))
        self.poly_conv1 = Conv3x3(1, dim // 2, rng)
        # zero-initialized so an untrained embedder leaves features unchanged
        self.poly_conv2 = Conv3x3(dim // 2, dim, rng, zero_init=True)

    def _pos(self, r: float, c: float) -> np.ndarray:
        # pixel -> token-grid coordinates (patch centers at integers)
        return sinusoidal_position((r + 0.5) / self.patch - 0.5,
                                   (c + 0.5) / self.patch - 0.5, self.dim)


def encode_prompt(penc: PromptEncoder, prompt: Prompt) -> PromptEmbedding:
    if prompt.kind == "box":
        r0, c0, r1, c1 = prompt.box
        pos = np.stack([penc._pos(r0, c0), penc._pos(r1, c1)])
        return PromptEmbedding(kind="box",
                               tokens=ad.add(Tensor(pos), penc.corner_embed))
    if prompt.kind == "point":
        pos = np.stack([penc._pos(r, c) for r, c in prompt.points])
        return PromptEmbedding(kind="point",
                               tokens=ad.add(Tensor(pos), penc.point_embed))
    if prompt.kind == "poly":
        gh, gw = penc.grid
        p = penc.patch
        coarse = np.asarray(prompt.coarse_mask, dtype=np.float64)
        if coarse.shape != (gh * p, gw * p):
            raise ValueError(f"coarse mask shape {coarse.shape} does not "
                             f"match image size {(gh * p, gw * p)}")
        pooled = coarse.reshape(gh, p, gw, p).mean(axis=(1, 3))
        x = Tensor(pooled.reshape(gh, gw, 1))
        x = ad.relu(penc.poly_conv1(x))
        dense = ad.reshape(penc.poly_conv2(x), (gh * gw, penc.dim))
        return PromptEmbedding(kind="poly", dense=dense)
    raise ValueError(f"unknown prompt kind {prompt.kind!r}")


class TwoWayLayer(Module):
    def __init__(self, dim: int, heads: int, ffn_hidden: int,
                 rng: np.random.Generator):
        super().__init__()
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.ln1 = LayerNorm(dim)
        self.cross_token_to_image = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = MLP([dim, ffn_hidden, dim], rng)
        self.ln3 = LayerNorm(dim)
        self.cross_image_to_token = MultiHeadAttention(dim, heads, rng)
        self.ln4 = LayerNorm(dim)

    def forward(self, tokens: Tensor, image: Tensor) -> tuple:
        t = self.ln1(ad.add(tokens, self.self_attn(tokens, tokens)))
        t = self.ln2(ad.add(t, self.cross_token_to_image(t, image)))
        # one shared feed-forward processes every token row, including the
        # object token when present
        t = self.ln3(ad.add(t, self.ffn(t)))
        image = self.ln4(ad.add(image, self.cross_image_to_token(image, t)))
        return t, image


class MaskDecoder(Module):
    def __init__(self, dim: int, heads: int, n_layers: int, n_out: int,
                 grid: tuple, seed: int, ffn_hidden: int = 128):
        super().__init__()
        rng = rng_from(seed, "mask-decoder")
        self.dim = dim
        self.grid = tuple(grid)
        self.n_out = n_out
        self.output_tokens = Parameter(rng.normal(0.0, 0.5, size=(n_out, dim)))
        self.layers = ModuleList([TwoWayLayer(dim, heads, ffn_hidden, rng)
                                  for _ in range(n_layers)])
        self.upscale = ConvTranspose2x2(dim, dim, rng)
        self.img_pos = sinusoidal_grid(grid[0], grid[1], dim)  # fixed table


class Injection(Module):
    """Object-token MLP plus the two feature-fusion upsamplers."""

    def __init__(self, k: int, d_slot: int, d_feat: int, dim: int, seed: int,
                 hidden: int = 128, zero_start: bool = True):
        super().__init__()
        rng = rng_from(seed, "injection")
        self.k = k
        self.d_slot = d_slot
        self.obj_mlp = MLP([k * d_slot, hidden, dim], rng,
                           zero_init_last=zero_start)
        self.fuse_semantic = ConvTranspose2x2(d_feat, dim, rng)
        self.fuse_detail = ConvTranspose2x2(d_feat, dim, rng, bias=False)


def slots_to_object_token(inject: Injection, slot_set) -> Tensor:
    """Flatten the slot matrix and combine nonlinearly into one token."""
    slots = slot_set.slots
    k, d = slots.shape
    if k != inject.k or d != inject.d_slot:
        raise ValueError(f"slot shape {(k, d)} does not match injection "
                         f"({inject.k}, {inject.d_slot})")
    return inject.obj_mlp(ad.reshape(slots, (1, k * d)))


def fuse_features(z: FeatureMap, d: DetailFeature,
                  inject: Injection) -> FusedObjectFeature:
    """Upsample semantic and detail tokens (stride 2) and add them."""
    if z.grid != d.grid:
        raise ValueError(f"grid mismatch {z.grid} vs {d.grid}")
    gh, gw = z.grid
    sem = ad.reshape(Tensor(z.tokens) if not isinstance(z.tokens, Tensor)
                     else z.tokens, (gh, gw, z.tokens.shape[-1]))
    det = ad.reshape(Tensor(d.tokens) if not isinstance(d.tokens, Tensor)
                     else d.tokens, (gh, gw, d.tokens.shape[-1]))
    return FusedObjectFeature(grid=ad.add(inject.fuse_semantic(sem),
                                          inject.fuse_detail(det)))


def decode_masks(decoder: MaskDecoder, inject, z: FeatureMap,
                 detail: DetailFeature, e: PromptEmbedding,
                 slot_set=None) -> dict:
    """Run the two-way decoder; returns mask logits (and object logits).

    With `slot_set` absent the token set simply lacks the object row, so
    the plain decoder is reproduced exactly.
    """
    image = ad.add(Tensor(z.tokens), decoder.img_pos)
    if e.dense is not None:
        image = ad.add(image, e.dense)

    toks = [decoder.output_tokens]
    if e.tokens is not None:
        toks.append(e.tokens)
    if slot_set is not None:
        if inject is None:
            raise ValueError("object head requested without injection params")
        toks.append(slots_to_object_token(inject, slot_set))
    t = toks[0] if len(toks) == 1 else ad.concat(toks, axis=0)

    for layer in decoder.layers:
        t, image = layer(t, image)

    gh, gw = decoder.grid
    feat = decoder.upscale(ad.reshape(image, (gh, gw, decoder.dim)))
    h2, w2 = 2 * gh, 2 * gw
    flat = ad.reshape(feat, (h2 * w2, decoder.dim))
    mask = ad.reshape(ad.matmul(flat, ad.transpose(t[0:1, :], (1, 0))),
                      (h2, w2))
    out = {"mask": mask, "object_mask": None, "object_token": None}

    if slot_set is not None:
        n_tok = t.shape[0]
        t_obj = t[n_tok - 1:n_tok, :]
        fused = fuse_features(z, detail, inject)
        flat_obj = ad.reshape(fused.grid, (h2 * w2, decoder.dim))
        out["object_mask"] = ad.reshape(
            ad.matmul(flat_obj, ad.transpose(t_obj, (1, 0))), (h2, w2))
        out["object_token"] = t_obj
    return out
