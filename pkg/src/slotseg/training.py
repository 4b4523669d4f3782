"""Training pipeline.

Four phases, each cached as a checkpoint in the run directory:

1. encoder.ckpt  - masked-patch pretraining of the feature encoder, then frozen
2. source.ckpt   - supervised prompt-encoder + mask-decoder training on the
                   labeled source split (plain decoding, no object token)
3. stage1.ckpt   - slot attention + broadcast decoder fitted to frozen source
                   features by reconstruction
4. stage2_*.ckpt - anchor/student/teacher self-training on the unlabeled
                   target split; prompts are derived from instance boxes,
                   masks are never read as labels

Stage 2 keeps three parameter copies: the anchor is frozen between bootstrap
events, the teacher tracks the student by EMA, and the student is the only
member that receives gradients. Weak and strong views of a sample share one
geometric draw, so their mask logits are pixel-aligned and pseudo-labels
transfer without interpolation.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .checkpoint import ensure_arch_matches, load_checkpoint, save_checkpoint
from .config import Config
from .dataio import check_manifest, load_split
from .encoder import Encoder, encode, init_encoder, pretrain_encoder
from .evaluation import evaluate
from .losses import base_loss, object_loss, supervised_loss
from .model import (SegModel, build_arch, build_encoder, build_encoder_arch,
                    build_model, forward_from_features)
from .nn import Adam, copy_params, ema_update, params_hash
from .prompts import PROMPT_KINDS, derive_prompt
from .rng import rng_from, seed_from
from .scenes import augment, transport_mask
from .slot_decoder import broadcast_decode, combine, reconstruction_loss
from .slots import run_slot_attention

STAGE_CHOICES = ("stage1", "stage2", "all")


class TrainError(RuntimeError):
    pass


class NumericalError(RuntimeError):
    """Raised when a training loss stops being finite."""


# reports ----------------------------------------------------------------------

@dataclass
class TrainingReport:
    records: list
    summary: dict = field(default_factory=dict)

    def save(self, run_dir):
        run_dir = Path(run_dir)
        with open(run_dir / "report.jsonl", "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        with open(run_dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary, fh, sort_keys=True, indent=1)
            fh.write("\n")

    def fingerprint(self) -> str:
        """Content hash; wall time is presentation, not result."""
        summary = {k: v for k, v in self.summary.items()
                   if k != "wall_time_sec"}
        payload = json.dumps({"records": self.records, "summary": summary},
                             sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# stage-2 triad ----------------------------------------------------------------

@dataclass
class ModelTriad:
    anchor: SegModel
    student: SegModel
    teacher: SegModel
    # the anchor decodes without the object token until the first bootstrap
    anchor_object_mode: bool = False


def update_teacher(triad: ModelTriad, momentum: float):
    ema_update(triad.teacher, triad.student, momentum)


def bootstrap_copy(triad: ModelTriad) -> dict:
    """Copy the student into the anchor; from now on the anchor decodes
    with the object token too. Returns the two parameter hashes so callers
    can record that the copy was exact."""
    copy_params(triad.anchor, triad.student)
    triad.anchor_object_mode = True
    return {"anchor_hash": params_hash(triad.anchor),
            "student_hash": params_hash(triad.student)}


# shared helpers ---------------------------------------------------------------

def _mean_terms(terms):
    import slotseg.autodiff as ad
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.mul(total, 1.0 / len(terms))


def _require_finite(loss, where: str):
    if not np.all(np.isfinite(loss.data)):
        raise NumericalError(f"non-finite loss in {where}")


def _augment_args(cfg: Config) -> dict:
    return {"translate_frac": cfg["aug.translate_frac"],
            "brightness": cfg["aug.brightness"],
            "contrast": cfg["aug.contrast"],
            "noise_max": cfg["aug.noise_max"],
            "channel_shuffle_p": cfg["aug.channel_shuffle_p"]}


def _prompt_args(cfg: Config) -> dict:
    return {"jitter": cfg["prompt.jitter"],
            "n_points": cfg["prompt.points"],
            "poly_vertices": cfg["prompt.poly_vertices"]}


def downsample_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Binary mask at logit resolution: block mean then majority."""
    h, w = mask.shape
    if h % out_h or w % out_w:
        raise ValueError(f"cannot pool {mask.shape} to ({out_h}, {out_w})")
    blocks = mask.astype(np.float64).reshape(
        out_h, h // out_h, out_w, w // out_w).mean(axis=(1, 3))
    return (blocks >= 0.5).astype(np.float64)


def _check_meta(meta: dict, cfg: Config, path):
    if meta.get("config_hash") != cfg.hash:
        raise TrainError(
            f"checkpoint {path} was trained under a different config "
            f"(hash {str(meta.get('config_hash'))[:12]}, expected "
            f"{cfg.hash[:12]}); rerun with --force")


# phase 1: encoder -------------------------------------------------------------

def _phase_encoder(cfg: Config, run_dir: Path, force: bool):
    path = run_dir / "encoder.ckpt"
    arch = build_encoder_arch(cfg)
    if path.exists() and not force:
        ck_arch, groups, meta = load_checkpoint(path)
        ensure_arch_matches(arch.descriptor(), ck_arch, path)
        _check_meta(meta, cfg, path)
        enc = init_encoder(seed_from(cfg["seed"], "encoder"), arch)
        enc.load_state_dict(groups["encoder"])
        enc.frozen = True
        enc.set_requires_grad(False)
        return enc, list(meta["records"]), meta["metrics"]

    corpus = load_split(run_dir, "source_train")
    enc = build_encoder(cfg, cfg["seed"])
    metrics = pretrain_encoder(enc, corpus, cfg["encoder.pretrain_steps"],
                               seed_from(cfg["seed"], "phase-encoder"),
                               lr=cfg["encoder.pretrain_lr"],
                               batch=cfg["encoder.pretrain_batch"],
                               mask_ratio=cfg["encoder.mask_ratio"])
    records = [{"phase": "encoder", **metrics}]
    save_checkpoint(path, arch.descriptor(), {"encoder": enc.state_dict()},
                    meta={"phase": "encoder", "config_hash": cfg.hash,
                          "seed": cfg["seed"], "metrics": metrics,
                          "records": records})
    return enc, records, metrics


# phase 2: supervised source decoder -------------------------------------------

def _phase_source(cfg: Config, run_dir: Path, enc: Encoder, force: bool):
    path = run_dir / "source.ckpt"
    arch = build_arch(cfg)
    if path.exists() and not force:
        ck_arch, groups, meta = load_checkpoint(path)
        ensure_arch_matches(arch.descriptor(), ck_arch, path)
        _check_meta(meta, cfg, path)
        return groups, list(meta["records"]), meta["metrics"]

    data = load_split(run_dir, "source_train")
    model = build_model(cfg, cfg["seed"])
    named = (list(model.prompt.named_parameters("prompt")) +
             list(model.decoder.named_parameters("decoder")))
    opt = Adam(named, lr=cfg["source.lr"])
    phase_seed = seed_from(cfg["seed"], "phase-source")
    aug_args = _augment_args(cfg)
    prompt_args = _prompt_args(cfg)
    out_h, out_w = 2 * arch.grid[0], 2 * arch.grid[1]
    records = []
    for step in range(cfg["source.steps"]):
        srng = rng_from(phase_seed, "batch", step)
        idx = srng.integers(0, len(data), size=cfg["source.batch"])
        terms = []
        for j, i in enumerate(idx):
            sample = data[int(i)]
            inst = int(srng.integers(0, sample.object_count))
            kind = PROMPT_KINDS[int(srng.integers(0, len(PROMPT_KINDS)))]
            # photometric augmentation here buys shift tolerance for free;
            # masks ride only on the geometric part of the view
            view = augment(sample, "strong",
                           seed_from(phase_seed, "aug", step, j), **aug_args)
            gt = transport_mask(sample.instance_masks[inst],
                                view.geometric_record)
            prompt = derive_prompt(gt, kind,
                                   seed_from(phase_seed, "prompt", step, j),
                                   target_index=inst, **prompt_args)
            fm, det = encode(enc, view.image)
            out = forward_from_features(model, fm, det, prompt, 0,
                                        with_object=False)
            terms.append(supervised_loss(out["mask"],
                                         downsample_mask(gt, out_h, out_w)))
        loss = _mean_terms(terms)
        _require_finite(loss, f"source step {step}")
        model.zero_grad()
        loss.backward()
        opt.step()
        records.append({"phase": "source", "step": step,
                        "loss": float(loss.data)})
    tail = [r["loss"] for r in records[-20:]]
    metrics = {"initial": records[0]["loss"] if records else None,
               "final": float(np.mean(tail)) if tail else None}
    groups = {"prompt": model.prompt.state_dict(),
              "decoder": model.decoder.state_dict()}
    save_checkpoint(path, arch.descriptor(), groups,
                    meta={"phase": "source", "config_hash": cfg.hash,
                          "seed": cfg["seed"], "metrics": metrics,
                          "records": records})
    return groups, records, metrics


# phase 3: slot discovery on frozen features -----------------------------------

def calibrate_slot_model(model: SegModel, feats: list, shrink: float) -> dict:
    """Corpus calibration before reconstruction training.

    Keys and values get a bias that cancels the mean normalized token, so
    the first competition round compares tokens by how they deviate from
    the corpus rather than by the shared component every token carries.
    The reconstruction head starts aimed at the corpus-mean token but
    deliberately short of it, so the earliest steps descend from a
    mean-level misfit instead of an already-fitted constant."""
    if not feats:
        raise TrainError("empty feature corpus for calibration")
    mu_ln = np.zeros(model.slot.d_feat)
    mu_raw = np.zeros(model.slot.d_feat)
    with no_grad():
        for tokens in feats:
            z = model.slot.norm_feat(Tensor(tokens)).data
            mu_ln += z.mean(axis=0)
            mu_raw += tokens.mean(axis=0)
    mu_ln /= len(feats)
    mu_raw /= len(feats)
    model.slot.k_proj.bias.data[:] = -(mu_ln @ model.slot.k_proj.weight.data)
    model.slot.v_proj.bias.data[:] = -(mu_ln @ model.slot.v_proj.weight.data)
    last = model.slotdec.mlp.layers[-1]
    last.bias.data[:model.slotdec.d_feat] = shrink * mu_raw
    return {"phase": "stage1-calibrate", "shrink": shrink,
            "token_mean_norm": float(np.linalg.norm(mu_raw)),
            "normed_mean_norm": float(np.linalg.norm(mu_ln))}


def _phase_stage1(cfg: Config, run_dir: Path, enc: Encoder, force: bool):
    path = run_dir / "stage1.ckpt"
    arch = build_arch(cfg)
    if path.exists() and not force:
        ck_arch, groups, meta = load_checkpoint(path)
        ensure_arch_matches(arch.descriptor(), ck_arch, path)
        _check_meta(meta, cfg, path)
        return groups, list(meta["records"]), meta["metrics"]

    data = load_split(run_dir, "source_train")
    feats = [encode(enc, s.image)[0].tokens for s in data]
    model = build_model(cfg, cfg["seed"])
    calib = calibrate_slot_model(model, feats, cfg["slotdec.mean_shrink"])
    named = (list(model.slot.named_parameters("slot")) +
             list(model.slotdec.named_parameters("slotdec")))
    # the attention projections move slowly: the reconstruction objective
    # holds a good grouping but cannot rediscover one it has walked out of
    opt = Adam(named, lr=cfg["stage1.lr"],
               lr_mults={"slot": cfg["stage1.slot_lr_mult"]})
    phase_seed = seed_from(cfg["seed"], "phase-stage1")
    step_records = []
    for step in range(cfg["stage1.steps"]):
        srng = rng_from(phase_seed, "batch", step)
        idx = srng.integers(0, len(feats), size=cfg["stage1.batch"])
        terms = []
        for j, i in enumerate(idx):
            slot_set, _ = run_slot_attention(
                model.slot, Tensor(feats[int(i)]), arch.k, arch.t_iters,
                seed_from(phase_seed, "slots", step, j))
            parts = combine(broadcast_decode(model.slotdec, slot_set))
            terms.append(reconstruction_loss(parts.combined, feats[int(i)]))
        loss = _mean_terms(terms)
        _require_finite(loss, f"stage1 step {step}")
        model.zero_grad()
        loss.backward()
        opt.step()
        step_records.append({"phase": "stage1", "step": step,
                             "loss": float(loss.data)})
    records = [calib] + step_records
    tail = [r["loss"] for r in step_records[-50:]]
    metrics = {"initial_rec": step_records[0]["loss"] if step_records else None,
               "final_rec": float(np.mean(tail)) if tail else None}
    if metrics["initial_rec"]:
        metrics["ratio"] = metrics["final_rec"] / metrics["initial_rec"]
    else:
        metrics["ratio"] = None
    groups = {"slot": model.slot.state_dict(),
              "slotdec": model.slotdec.state_dict()}
    save_checkpoint(path, arch.descriptor(), groups,
                    meta={"phase": "stage1", "config_hash": cfg.hash,
                          "seed": cfg["seed"], "metrics": metrics,
                          "records": records})
    return groups, records, metrics


# phase 4: target self-training -------------------------------------------------

def train_step(triad: ModelTriad, enc: Encoder, data: list, mode: str,
               opt: Adam, cfg: Config, step_seed: int) -> dict:
    """One optimizer step of stage-2 self-training.

    mode "warm": only the object-token path trains, against the anchor.
    mode "boot": full loss (consistency + object + slot reconstruction).
    Anchor and teacher run without gradient tracking throughout.
    """
    if mode not in ("warm", "boot"):
        raise ValueError(f"unknown stage-2 mode {mode!r}")
    srng = rng_from(step_seed, "batch")
    idx = srng.integers(0, len(data), size=cfg["stage2.batch"])
    aug_args = _augment_args(cfg)
    prompt_args = _prompt_args(cfg)
    poly_frac = cfg["stage2.poly_frac"]
    if not 0.0 <= poly_frac <= 1.0:
        raise ValueError(f"stage2.poly_frac {poly_frac} outside [0, 1]")
    base_terms, obj_terms, rec_terms = [], [], []
    for j, i in enumerate(idx):
        sample = data[int(i)]
        inst = int(srng.integers(0, sample.object_count))
        # dense prompts pin the anchor's output far more tightly than a box
        # or a click, so their pseudo-labels carry most of the clean signal;
        # sampling leans on them and the sparse kinds ride the shared trunk
        if srng.random() < poly_frac:
            kind = "poly"
        else:
            kind = ("box", "point")[int(srng.integers(0, 2))]
        aug_seed = seed_from(step_seed, "aug", j)
        weak = augment(sample, "weak", aug_seed, **aug_args)
        strong = augment(sample, "strong", aug_seed, **aug_args)
        gt = transport_mask(sample.instance_masks[inst],
                            weak.geometric_record)
        prompt = derive_prompt(gt, kind, seed_from(step_seed, "prompt", j),
                               target_index=inst, **prompt_args)
        slot_seed = seed_from(step_seed, "slots", j)

        fm_w, det_w = encode(enc, weak.image)
        with no_grad():
            anchor_out = forward_from_features(
                triad.anchor, fm_w, det_w, prompt, slot_seed,
                with_object=triad.anchor_object_mode)
        anchor_logits = anchor_out["mask"].data

        fm_s, det_s = encode(enc, strong.image)
        student_out = forward_from_features(triad.student, fm_s, det_s,
                                            prompt, slot_seed,
                                            with_object=True)
        obj_terms.append(object_loss(student_out["object_mask"],
                                     anchor_logits))
        if mode == "boot":
            with no_grad():
                teacher_out = forward_from_features(
                    triad.teacher, fm_w, det_w, prompt, slot_seed,
                    with_object=True)
            base_terms.append(base_loss(student_out["mask"],
                                        teacher_out["mask"].data,
                                        anchor_logits))
            parts = combine(broadcast_decode(triad.student.slotdec,
                                             student_out["slots"]))
            rec_terms.append(reconstruction_loss(parts.combined, fm_s.tokens))

    import slotseg.autodiff as ad
    obj = _mean_terms(obj_terms)
    if mode == "warm":
        loss = obj
        metrics = {"loss": float(loss.data), "base": 0.0,
                   "obj": float(obj.data), "rec": 0.0}
    else:
        base = _mean_terms(base_terms)
        rec = _mean_terms(rec_terms)
        loss = ad.add(base, ad.add(ad.mul(obj, cfg["stage2.lambda_obj"]),
                                   ad.mul(rec, cfg["stage2.lambda_rec"])))
        metrics = {"loss": float(loss.data), "base": float(base.data),
                   "obj": float(obj.data), "rec": float(rec.data)}
    _require_finite(loss, "stage2 step")
    triad.student.zero_grad()
    loss.backward()
    opt.step()
    update_teacher(triad, cfg["stage2.ema_momentum"])
    return metrics


def validation_miou(model: SegModel, enc: Encoder, samples: list,
                    cfg: Config, with_object: bool = True) -> float:
    """Jitter-free box-prompt mIoU on the output-token mask."""
    val_cfg = cfg.overridden(**{"prompt.jitter": 0.0})
    report = evaluate(model, enc, samples, ["box"], val_cfg,
                      seed_from(cfg["seed"], "val"),
                      with_object=with_object, with_ari=False)
    return report.miou["box"]


def _forward_equal(triad: ModelTriad, enc: Encoder, samples: list,
                   cfg: Config) -> bool:
    """Bit-identical anchor vs student logits on a validation batch."""
    with no_grad():
        for i, sample in enumerate(samples[:4]):
            fm, det = encode(enc, sample.image)
            prompt = derive_prompt(sample.instance_masks[0], "box",
                                   seed_from(cfg["seed"], "bootstrap-check", i),
                                   jitter=0.0)
            slot_seed = seed_from(sample.seed, "eval-slots")
            a = forward_from_features(triad.anchor, fm, det, prompt,
                                      slot_seed, with_object=True)
            s = forward_from_features(triad.student, fm, det, prompt,
                                      slot_seed, with_object=True)
            if not np.array_equal(a["mask"].data, s["mask"].data):
                return False
    return True


def _stage2_opt(student: SegModel, mode: str, cfg: Config) -> Adam:
    if mode == "warm":
        # the warm phase exists to train the injection; no rate scaling
        named = list(student.inject.named_parameters("inject"))
        return Adam(named, lr=cfg["stage2.lr"])
    named = (list(student.decoder.named_parameters("decoder")) +
             list(student.slot.named_parameters("slot")) +
             list(student.slotdec.named_parameters("slotdec")) +
             list(student.inject.named_parameters("inject")))
    return Adam(named, lr=cfg["stage2.lr"],
                lr_mults={"slot": cfg["stage2.slot_lr_mult"],
                          "decoder": cfg["stage2.decoder_lr_mult"],
                          "inject": cfg["stage2.inject_lr_mult"]})


def _triad_groups(triad: ModelTriad) -> dict:
    groups = {}
    for role, model in (("anchor", triad.anchor), ("student", triad.student),
                        ("teacher", triad.teacher)):
        for name, state in model.group_state().items():
            groups[f"{role}.{name}"] = state
    return groups


def _load_triad_groups(triad: ModelTriad, groups: dict):
    for role, model in (("anchor", triad.anchor), ("student", triad.student),
                        ("teacher", triad.teacher)):
        model.load_group_state({name: groups[f"{role}.{name}"]
                                for name in model.group_names()})


def _save_stage2_latest(path, arch, cfg, triad, opt, opt_mode, epoch_done,
                        best_val, best_student_val, records):
    groups = _triad_groups(triad)
    opt_state = opt.state_dict()
    groups["optimizer"] = {
        name: (np.asarray(value, dtype=np.float64) if np.isscalar(value)
               else value)
        for name, value in opt_state.items()}
    save_checkpoint(path, arch.descriptor(), groups,
                    meta={"phase": "stage2", "config_hash": cfg.hash,
                          "seed": cfg["seed"], "epoch_done": epoch_done,
                          "best_val": best_val,
                          "best_student_val": best_student_val,
                          "anchor_object_mode": triad.anchor_object_mode,
                          "opt_mode": opt_mode, "records": records})


def _save_stage2_best(path, arch, cfg, triad, epoch, val):
    save_checkpoint(path, arch.descriptor(), triad.student.group_state(),
                    meta={"phase": "stage2-best", "config_hash": cfg.hash,
                          "seed": cfg["seed"], "epoch": epoch,
                          "val_miou": val})


def _phase_stage2(cfg: Config, run_dir: Path, enc: Encoder,
                  src_groups: dict, s1_groups: dict, force: bool):
    latest_path = run_dir / "stage2_latest.ckpt"
    best_path = run_dir / "stage2_best.ckpt"
    arch = build_arch(cfg)
    epochs = cfg["stage2.epochs"]
    warm_epochs = math.ceil(cfg["stage2.warm_frac"] * epochs)
    steps_per_epoch = cfg["stage2.steps_per_epoch"]
    phase_seed = seed_from(cfg["seed"], "phase-stage2")

    def fresh_triad() -> ModelTriad:
        student = build_model(cfg, cfg["seed"])
        student.load_group_state({"prompt": src_groups["prompt"],
                                  "decoder": src_groups["decoder"],
                                  "slot": s1_groups["slot"],
                                  "slotdec": s1_groups["slotdec"]})
        anchor = build_model(cfg, cfg["seed"])
        teacher = build_model(cfg, cfg["seed"])
        copy_params(anchor, student)
        copy_params(teacher, student)
        return ModelTriad(anchor=anchor, student=student, teacher=teacher)

    start_epoch = 0
    best_val = None  # replacement bar; seeded from the anchor's own score
    best_student_val = float("-inf")  # separate tracker for stage2_best.ckpt
    records = []
    resume_opt_state = None
    resume_opt_mode = None
    if latest_path.exists() and not force:
        ck_arch, groups, meta = load_checkpoint(latest_path)
        ensure_arch_matches(arch.descriptor(), ck_arch, latest_path)
        _check_meta(meta, cfg, latest_path)
        records = list(meta["records"])
        best_val = meta["best_val"]
        best_student_val = meta["best_student_val"]
        start_epoch = meta["epoch_done"]
        if start_epoch >= epochs:
            return records, {"best_val": best_val, "epochs": epochs,
                             "warm_epochs": warm_epochs}
        triad = fresh_triad()
        _load_triad_groups(triad, groups)
        triad.anchor_object_mode = meta["anchor_object_mode"]
        resume_opt_state = groups["optimizer"]
        resume_opt_mode = meta["opt_mode"]
    else:
        triad = fresh_triad()

    # the prompt encoder stays frozen on the target domain
    triad.student.prompt.set_requires_grad(False)

    opt = None
    opt_mode = None
    train_data = load_split(run_dir, "target_train")
    val_data = load_split(run_dir, "target_val")
    if best_val is None:
        # the anchor is only ever replaced by a student that beats it
        best_val = validation_miou(triad.anchor, enc, val_data, cfg,
                                   with_object=triad.anchor_object_mode)
        records.append({"phase": "stage2-init", "anchor_val_miou": best_val})
    for epoch in range(start_epoch, epochs):
        mode = "warm" if epoch < warm_epochs else "boot"
        if opt is None or opt_mode != mode:
            opt = _stage2_opt(triad.student, mode, cfg)
            opt_mode = mode
            if (resume_opt_state is not None and resume_opt_mode == mode
                    and epoch == start_epoch):
                state = dict(resume_opt_state)
                state["step_count"] = int(state["step_count"])
                opt.load_state_dict(state)
        for step in range(steps_per_epoch):
            step_seed = seed_from(phase_seed, "epoch", epoch, "step", step)
            metrics = train_step(triad, enc, train_data, mode, opt, cfg,
                                 step_seed)
            records.append({"phase": "stage2", "epoch": epoch, "step": step,
                            "mode": mode, **metrics})
        epoch_record = {"phase": "stage2-epoch", "epoch": epoch, "mode": mode}
        if mode == "boot":
            val = validation_miou(triad.student, enc, val_data, cfg)
            epoch_record["val_miou"] = val
            if val > best_student_val:
                best_student_val = val
                _save_stage2_best(best_path, arch, cfg, triad, epoch, val)
            if val > best_val:
                best_val = val
                info = bootstrap_copy(triad)
                epoch_record.update({"bootstrap": True, **info,
                                     "forward_equal": _forward_equal(
                                         triad, enc, val_data, cfg)})
            else:
                epoch_record["bootstrap"] = False
        records.append(epoch_record)
        _save_stage2_latest(latest_path, arch, cfg, triad, opt, opt_mode,
                            epoch + 1, best_val, best_student_val, records)
    if not best_path.exists():
        # all-warm schedules never score the student inside the loop
        val = validation_miou(triad.student, enc, val_data, cfg)
        best_student_val = val
        _save_stage2_best(best_path, arch, cfg, triad, epochs - 1, val)
    return records, {"best_val": best_val, "epochs": epochs,
                     "warm_epochs": warm_epochs}


# orchestration ----------------------------------------------------------------

def fit(cfg: Config, run_dir, stage: str = "all",
        force: bool = False) -> TrainingReport:
    if stage not in STAGE_CHOICES:
        raise TrainError(f"unknown stage {stage!r}; choose from "
                         f"{STAGE_CHOICES}")
    t0 = time.time()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    check_manifest(cfg, run_dir)
    forced = {"stage1": ("stage1",), "stage2": ("stage2",),
              "all": ("encoder", "source", "stage1", "stage2")}[stage]

    enc, records, enc_metrics = _phase_encoder(cfg, run_dir,
                                               force and "encoder" in forced)
    src_groups, src_records, src_metrics = _phase_source(
        cfg, run_dir, enc, force and "source" in forced)
    s1_groups, s1_records, s1_metrics = _phase_stage1(
        cfg, run_dir, enc, force and "stage1" in forced)
    records = records + src_records + s1_records
    summary = {"config_hash": cfg.hash, "seed": cfg["seed"], "stage": stage,
               "encoder": enc_metrics, "source": src_metrics,
               "stage1": s1_metrics, "stage2": None}
    if stage in ("stage2", "all"):
        s2_records, s2_summary = _phase_stage2(
            cfg, run_dir, enc, src_groups, s1_groups,
            force and "stage2" in forced)
        records = records + s2_records
        summary["stage2"] = s2_summary
    summary["wall_time_sec"] = time.time() - t0
    report = TrainingReport(records=records, summary=summary)
    report.save(run_dir)
    return report


# evaluation entry points --------------------------------------------------------

def load_frozen_encoder(cfg: Config, run_dir) -> Encoder:
    enc, _, _ = _phase_encoder(cfg, Path(run_dir), force=False)
    return enc


def load_eval_bundle(cfg: Config, run_dir, checkpoint_name: str):
    """(model, encoder, with_object, meta) for a named checkpoint.

    Checkpoints produced before stage 2 describe plain-decoder models and
    are evaluated without the object token; stage-2 checkpoints with it.
    """
    run_dir = Path(run_dir)
    path = run_dir / checkpoint_name
    if not path.exists():
        raise TrainError(f"missing checkpoint {path}; train first")
    ck_arch, groups, meta = load_checkpoint(path)
    arch = build_arch(cfg)
    ensure_arch_matches(arch.descriptor(), ck_arch, path)
    _check_meta(meta, cfg, path)
    model = build_model(cfg, cfg["seed"])
    if any(name.startswith("student.") for name in groups):
        model.load_group_state({name: groups[f"student.{name}"]
                                for name in model.group_names()})
    else:
        model.load_group_state({name: groups[name] for name in groups
                                if name in model.group_names()})
    enc = load_frozen_encoder(cfg, run_dir)
    with_object = meta.get("phase") in ("stage2", "stage2-best")
    return model, enc, with_object, meta
