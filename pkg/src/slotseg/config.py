"""Run configuration: flat namespaced keys, strict schema, stable hash.

The config file is YAML with dotted keys ("scene.height: 64"). Every key
has a default; unknown keys are rejected by name; the hash is computed
over a canonical sorted rendering, so key order never matters. `run_dir`
is excluded from the hash because it names where results go, not what is
computed.
"""

from __future__ import annotations

import hashlib

import yaml


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "run_dir": "runs/default",

    "scene.height": 64,
    "scene.width": 64,
    "scene.min_objects": 3,
    "scene.max_objects": 5,
    "scene.radius_min": 0.13,
    "scene.radius_max": 0.22,

    "data.source_train": 256,
    "data.source_eval": 64,
    "data.target_train": 128,
    "data.target_val": 32,
    "data.target_eval": 64,

    "aug.translate_frac": 0.05,
    "aug.brightness": 0.3,
    "aug.contrast": 0.3,
    "aug.noise_max": 0.05,
    "aug.channel_shuffle_p": 0.2,

    "shift.texture_swap": True,
    "shift.color_gain_r": 0.82,
    "shift.color_gain_g": 1.0,
    "shift.color_gain_b": 0.72,
    "shift.color_bias_r": -0.04,
    "shift.color_bias_g": 0.0,
    "shift.color_bias_b": 0.06,
    "shift.noise_sigma": 0.02,

    "encoder.dim": 64,
    "encoder.depth": 4,
    "encoder.heads": 4,
    "encoder.patch": 4,
    "encoder.pe_scale": 0.25,
    "encoder.pretrain_steps": 400,
    "encoder.pretrain_lr": 1e-3,
    "encoder.pretrain_batch": 8,
    "encoder.mask_ratio": 0.5,

    "slot.count": 6,
    "slot.iters": 3,
    "slot.dim": 64,
    "slot.query_gain": 8.0,

    "slotdec.hidden": 128,
    "slotdec.mean_shrink": 0.95,

    "decoder.dim": 64,
    "decoder.heads": 4,
    "decoder.layers": 2,
    "decoder.out_tokens": 1,
    "decoder.ffn_hidden": 128,

    "inject.hidden": 128,

    "prompt.points": 1,
    "prompt.poly_vertices": 8,
    "prompt.jitter": 0.1,

    "source.steps": 600,
    "source.lr": 3e-4,
    "source.batch": 4,

    "stage1.steps": 4000,
    "stage1.lr": 4e-4,
    "stage1.slot_lr_mult": 0.05,
    "stage1.batch": 4,

    "stage2.epochs": 12,
    "stage2.steps_per_epoch": 60,
    "stage2.batch": 4,
    "stage2.lr": 3e-4,
    "stage2.slot_lr_mult": 0.05,
    "stage2.warm_frac": 0.2,
    "stage2.ema_momentum": 0.99,
    "stage2.poly_frac": 0.5,
    "stage2.decoder_lr_mult": 1.0,
    "stage2.inject_lr_mult": 1.0,
    "stage2.lambda_obj": 1.0,
    "stage2.lambda_rec": 0.1,

    "eval.threshold": 0.5,
    "viz.every_epochs": 5,
}

HASH_EXCLUDED = ("run_dir",)


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects a boolean, "
                              f"got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} expects an integer, "
                              f"got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} expects a number, "
                              f"got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} expects a string, "
                              f"got {value!r}")
        return value
    raise ConfigError(f"unsupported default type for {key!r}")


def _canon(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Config:
    def __init__(self, data: dict = None):
        merged = dict(DEFAULTS)
        if data:
            for key, value in data.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key: {key}")
                merged[key] = _coerce(key, value, DEFAULTS[key])
        self._data = merged

    @classmethod
    def load(cls, path) -> "Config":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a mapping")
        return cls(raw)

    def __getitem__(self, key: str):
        if key not in self._data:
            raise ConfigError(f"unknown config key: {key}")
        return self._data[key]

    def items(self):
        return self._data.items()

    def overridden(self, **updates) -> "Config":
        """New Config with the given keys replaced (dots spelled as given)."""
        data = dict(self._data)
        for key, value in updates.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            data[key] = _coerce(key, value, DEFAULTS[key])
        cfg = Config()
        cfg._data = data
        return cfg

    @property
    def hash(self) -> str:
        lines = [f"{k}={_canon(v)}" for k, v in sorted(self._data.items())
                 if k not in HASH_EXCLUDED]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def to_yaml_text(self) -> str:
        lines = []
        for key in sorted(self._data):
            value = self._data[key]
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, str):
                rendered = value
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key}: {rendered}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml_text())


def scene_spec(cfg: Config, domain: str):
    from .scenes import SceneSpec
    return SceneSpec(height=cfg["scene.height"], width=cfg["scene.width"],
                     min_objects=cfg["scene.min_objects"],
                     max_objects=cfg["scene.max_objects"],
                     radius_min=cfg["scene.radius_min"],
                     radius_max=cfg["scene.radius_max"], domain=domain)


def shift_config(cfg: Config):
    from .scenes import ShiftConfig
    return ShiftConfig(texture_swap=cfg["shift.texture_swap"],
                       color_gain=(cfg["shift.color_gain_r"],
                                   cfg["shift.color_gain_g"],
                                   cfg["shift.color_gain_b"]),
                       color_bias=(cfg["shift.color_bias_r"],
                                   cfg["shift.color_bias_g"],
                                   cfg["shift.color_bias_b"]),
                       noise_sigma=cfg["shift.noise_sigma"])
