"""Composite promptable segmenter and its forward-pass helpers.

A SegModel bundles the trainable pieces (prompt encoder, two-way mask
decoder, slot module, slot decoder, injection modules) behind one
parameter tree; the frozen feature encoder is passed in separately and
never owned by the model, so anchor/student/teacher can share it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import Encoder, EncoderArch, encode, init_encoder
from .injection import Injection, MaskDecoder, PromptEncoder, decode_masks, \
    encode_prompt
from .nn import Module
from .rng import seed_from
from .slot_decoder import SlotDecoder
from .slots import SlotModule, run_slot_attention


@dataclass
class ModelArch:
    height: int = 64
    width: int = 64
    patch: int = 8
    d_feat: int = 64  # encoder channel count
    d_slot: int = 64
    k: int = 6
    t_iters: int = 3
    dec_dim: int = 64
    dec_heads: int = 4
    dec_layers: int = 2
    n_out: int = 1
    ffn_hidden: int = 128
    slotdec_hidden: int = 128
    inj_hidden: int = 128
    query_gain: float = 8.0  # sharpness of the initial slot assignments

    def __post_init__(self):
        if self.d_slot != self.dec_dim:
            raise ValueError("slot dim must equal decoder token dim "
                             f"({self.d_slot} vs {self.dec_dim})")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError("image size must be divisible by patch size")

    @property
    def grid(self) -> tuple:
        return (self.height // self.patch, self.width // self.patch)

    def descriptor(self) -> dict:
        return {k: getattr(self, k) for k in (
            "height", "width", "patch", "d_feat", "d_slot", "k", "t_iters",
            "dec_dim", "dec_heads", "dec_layers", "n_out", "ffn_hidden",
            "slotdec_hidden", "inj_hidden", "query_gain")}


class SegModel(Module):
    def __init__(self, arch: ModelArch, seed: int):
        super().__init__()
        self.arch = arch
        grid = arch.grid
        self.prompt = PromptEncoder(arch.dec_dim, arch.patch, grid,
                                    seed_from(seed, "prompt"))
        self.decoder = MaskDecoder(arch.dec_dim, arch.dec_heads,
                                   arch.dec_layers, arch.n_out, grid,
                                   seed_from(seed, "decoder"), arch.ffn_hidden)
        self.slot = SlotModule(arch.d_feat, arch.d_slot,
                               seed_from(seed, "slot"),
                               query_gain=arch.query_gain)
        self.slotdec = SlotDecoder(grid, arch.d_slot, arch.d_feat,
                                   seed_from(seed, "slotdec"),
                                   arch.slotdec_hidden)
        self.inject = Injection(arch.k, arch.d_slot, arch.d_feat,
                                arch.dec_dim, seed_from(seed, "inject"),
                                arch.inj_hidden)

    def group_names(self) -> tuple:
        return ("prompt", "decoder", "slot", "slotdec", "inject")

    def group_state(self) -> dict:
        return {name: getattr(self, name).state_dict()
                for name in self.group_names()}

    def load_group_state(self, groups: dict):
        for name, state in groups.items():
            if name not in self.group_names():
                raise ValueError(f"unknown parameter group {name!r}")
            getattr(self, name).load_state_dict(state)


def forward_from_features(model: SegModel, fm, detail, prompt, slot_seed: int,
                          with_object: bool = True) -> dict:
    """Decode masks from precomputed encoder features."""
    e = encode_prompt(model.prompt, prompt)
    slot_set = None
    attn = None
    if with_object:
        slot_set, attn = run_slot_attention(model.slot, Tensor(fm.tokens),
                                            model.arch.k, model.arch.t_iters,
                                            slot_seed)
    out = decode_masks(model.decoder, model.inject if with_object else None,
                       fm, detail, e, slot_set)
    out["slots"] = slot_set
    out["attention"] = attn
    return out


def forward_masks(model: SegModel, enc: Encoder, image: np.ndarray, prompt,
                  slot_seed: int, with_object: bool = True) -> dict:
    fm, detail = encode(enc, image)
    return forward_from_features(model, fm, detail, prompt, slot_seed,
                                 with_object)


# config-keyed builders --------------------------------------------------------

def build_encoder_arch(cfg) -> EncoderArch:
    return EncoderArch(dim=cfg["encoder.dim"], depth=cfg["encoder.depth"],
                       heads=cfg["encoder.heads"], patch=cfg["encoder.patch"],
                       pe_scale=cfg["encoder.pe_scale"])


def build_arch(cfg) -> ModelArch:
    return ModelArch(height=cfg["scene.height"], width=cfg["scene.width"],
                     patch=cfg["encoder.patch"], d_feat=cfg["encoder.dim"],
                     d_slot=cfg["slot.dim"], k=cfg["slot.count"],
                     t_iters=cfg["slot.iters"], dec_dim=cfg["decoder.dim"],
                     dec_heads=cfg["decoder.heads"],
                     dec_layers=cfg["decoder.layers"],
                     n_out=cfg["decoder.out_tokens"],
                     ffn_hidden=cfg["decoder.ffn_hidden"],
                     slotdec_hidden=cfg["slotdec.hidden"],
                     inj_hidden=cfg["inject.hidden"],
                     query_gain=cfg["slot.query_gain"])


def build_model(cfg, seed: int) -> SegModel:
    return SegModel(build_arch(cfg), seed_from(seed, "model"))


def build_encoder(cfg, seed: int) -> Encoder:
    return init_encoder(seed_from(seed, "encoder"), build_encoder_arch(cfg))
