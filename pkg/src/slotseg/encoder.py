"""Small frozen patch-transformer feature extractor.

Images are cut into non-overlapping patches, linearly embedded, summed
with a fixed 2-D sinusoidal positional table and passed through a few
pre-norm transformer blocks. `encode` exposes two views of the result:
the final normalized tokens (semantic features) and the raw output of the
first block (detail features, used later for fusion).

A short masked-patch reconstruction pretraining gives the features enough
structure for slot discovery; afterwards the encoder is frozen and every
training phase treats it as a constant function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .nn import LayerNorm, Linear, MLP, Module, ModuleList, MultiHeadAttention
from .rng import rng_from


@dataclass
class EncoderArch:
    dim: int = 64
    depth: int = 4
    heads: int = 4
    patch: int = 8
    # positional tables are scaled down so appearance, not position,
    # dominates the token geometry that slot attention clusters over
    pe_scale: float = 1.0

    def descriptor(self) -> dict:
        return {"dim": self.dim, "depth": self.depth, "heads": self.heads,
                "patch": self.patch, "pe_scale": self.pe_scale}


@dataclass
class FeatureMap:
    tokens: np.ndarray  # (N, D)
    grid: tuple  # (grid_h, grid_w)


@dataclass
class DetailFeature:
    tokens: np.ndarray  # (N, D), output of the first block
    grid: tuple


class TransformerBlock(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = MLP([dim, 2 * dim, dim], rng)

    def forward(self, x: Tensor) -> Tensor:
        normed = self.ln1(x)
        x = ad.add(x, self.attn(normed, normed))
        return ad.add(x, self.ffn(self.ln2(x)))


class Encoder(Module):
    def __init__(self, seed: int, arch: EncoderArch):
        super().__init__()
        if arch.dim % arch.heads != 0:
            raise ValueError(f"encoder dim {arch.dim} not divisible by "
                             f"heads {arch.heads}")
        rng = rng_from(seed, "encoder-init")
        self.arch = arch
        patch_in = arch.patch * arch.patch * 3
        self.patch_embed = Linear(patch_in, arch.dim, rng)
        self.blocks = ModuleList([TransformerBlock(arch.dim, arch.heads, rng)
                                  for _ in range(arch.depth)])
        self.final_norm = LayerNorm(arch.dim)
        # pretraining-only pieces (kept in the checkpoint for reproducibility)
        self.mask_token = nn.Parameter(rng.normal(0.0, 0.02, size=arch.dim))
        self.recon_head = Linear(arch.dim, patch_in, rng)
        self.frozen = False
        self._pos_cache = {}

    def pos_table(self, grid_h: int, grid_w: int) -> np.ndarray:
        key = (grid_h, grid_w)
        if key not in self._pos_cache:
            table = nn.sinusoidal_grid(grid_h, grid_w, self.arch.dim)
            self._pos_cache[key] = table * self.arch.pe_scale
        return self._pos_cache[key]

    def forward_tokens(self, patches: Tensor, grid: tuple,
                       mask: np.ndarray = None):
        """Embed -> (optional token masking) -> blocks; returns (final, detail)."""
        x = self.patch_embed(patches)
        if mask is not None:
            keep = (1.0 - mask)[:, None]
            x = ad.add(ad.mul(x, keep), ad.mul(self.mask_token, mask[:, None]))
        x = ad.add(x, self.pos_table(*grid))
        detail = None
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i == 0:
                detail = x
        if detail is None:  # depth 0: patch embedding + positions only
            detail = x
        return self.final_norm(x), detail


def init_encoder(seed: int, arch: EncoderArch) -> Encoder:
    return Encoder(seed, arch)


def patchify(image: np.ndarray, patch: int) -> tuple:
    h, w, _ = image.shape
    if h % patch or w % patch:
        raise ValueError(f"image size {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    patches = (image.reshape(gh, patch, gw, patch, 3)
               .transpose(0, 2, 1, 3, 4)
               .reshape(gh * gw, patch * patch * 3))
    return np.ascontiguousarray(patches), (gh, gw)


def encode(enc: Encoder, image: np.ndarray) -> tuple:
    """Frozen-feature extraction; returns (FeatureMap, DetailFeature)."""
    patches, grid = patchify(np.asarray(image, dtype=np.float64), enc.arch.patch)
    with ad.no_grad():
        final, detail = enc.forward_tokens(Tensor(patches), grid)
    return (FeatureMap(tokens=final.data.copy(), grid=grid),
            DetailFeature(tokens=detail.data.copy(), grid=grid))


def pretrain_encoder(enc: Encoder, corpus: list, steps: int, seed: int,
                     lr: float = 1e-3, batch: int = 8,
                     mask_ratio: float = 0.5) -> dict:
    """Masked-patch reconstruction pretraining; freezes the encoder after.

    Returns {"initial": float|None, "final": float|None, "ratio": float|None}
    so callers can record the achieved improvement.
    """
    if enc.frozen:
        raise ValueError("encoder is already frozen")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    report = {"initial": None, "final": None, "ratio": None}
    if steps > 0:
        if not corpus:
            raise ValueError("empty pretraining corpus")
        opt = nn.Adam(enc.named_parameters(), lr=lr)
        patch_dim = enc.arch.patch * enc.arch.patch * 3
        for step in range(steps):
            srng = rng_from(seed, "enc-pretrain", step)
            idx = srng.choice(len(corpus), size=min(batch, len(corpus)),
                              replace=len(corpus) < batch)
            terms = []
            for i in np.atleast_1d(idx):
                patches, grid = patchify(corpus[int(i)].image, enc.arch.patch)
                n = patches.shape[0]
                mask = (srng.random(n) < mask_ratio).astype(np.float64)
                if mask.sum() == 0:
                    mask[0] = 1.0
                final, _ = enc.forward_tokens(Tensor(patches), grid, mask)
                pred = enc.recon_head(final)
                diff = ad.sub(pred, patches)
                sq = ad.mul(ad.mul(diff, diff), mask[:, None])
                terms.append(ad.mul(ad.sum_(sq), 1.0 / (mask.sum() * patch_dim)))
            loss = terms[0]
            for t in terms[1:]:
                loss = ad.add(loss, t)
            loss = ad.mul(loss, 1.0 / len(terms))
            if not np.isfinite(loss.data):
                raise FloatingPointError("non-finite encoder pretraining loss")
            if step == 0:
                report["initial"] = loss.item()
            report["final"] = loss.item()
            opt.zero_grad()
            loss.backward()
            opt.step()
        report["ratio"] = report["final"] / report["initial"]
    enc.frozen = True
    enc.set_requires_grad(False)
    return report
