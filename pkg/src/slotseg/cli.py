"""Command-line entry points: gen-data, train, eval, viz.

Exit codes: 0 success, 2 usage/configuration/data errors, 3 numerical
failure during training. The run directory comes from --run-dir, else the
SLOTSEG_RUN_DIR environment variable, else the config value.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import Config, ConfigError
from .dataio import DataError, generate_datasets, load_split
from .evaluation import evaluate, write_report
from .prompts import PROMPT_KINDS
from .rng import seed_from
from .training import (STAGE_CHOICES, NumericalError, TrainError, fit,
                       load_eval_bundle)
from .viz import save_panel, visualize_sample


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults apply)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--run-dir", help="run directory "
                        "(overrides SLOTSEG_RUN_DIR and the config)")

    parser = argparse.ArgumentParser(
        prog="slotseg",
        description="slot-conditioned promptable segmentation with "
                    "target-domain self-training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="render the synthetic scene splits")
    p.add_argument("--force", action="store_true",
                   help="overwrite existing data")

    p = sub.add_parser("train", parents=[common],
                       help="run the training pipeline")
    p.add_argument("--stage", choices=STAGE_CHOICES, default="all",
                   help="how far to take the pipeline (default: all)")
    p.add_argument("--force", action="store_true",
                   help="retrain the requested stage even if cached")

    p = sub.add_parser("eval", parents=[common],
                       help="score a checkpoint on a data split")
    p.add_argument("--checkpoint", default="stage2_best.ckpt",
                   help="checkpoint file name inside the run directory")
    p.add_argument("--split", default="target_eval")
    p.add_argument("--prompts", default="box,point,poly",
                   help="comma-separated prompt kinds ('' for slot-only)")

    p = sub.add_parser("viz", parents=[common],
                       help="write a slot/mask panel for one sample")
    p.add_argument("--checkpoint", default="stage2_best.ckpt")
    p.add_argument("--split", default="target_eval")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", help="output PNG path")
    return parser


def _resolve(args) -> tuple:
    cfg = Config.load(args.config) if args.config else Config()
    if args.seed is not None:
        cfg = cfg.overridden(seed=args.seed)
    run_dir = (args.run_dir or os.environ.get("SLOTSEG_RUN_DIR")
               or cfg["run_dir"])
    cfg = cfg.overridden(run_dir=str(run_dir))
    return cfg, Path(run_dir)


def _cmd_gen_data(args) -> int:
    cfg, run_dir = _resolve(args)
    manifest = generate_datasets(cfg, run_dir, force=args.force)
    for split in sorted(manifest["splits"]):
        info = manifest["splits"][split]
        print(f"{split}: {info['count']} scenes ({info['domain']})")
    print(f"data written to {run_dir / 'data'}")
    return 0


def _cmd_train(args) -> int:
    cfg, run_dir = _resolve(args)
    report = fit(cfg, run_dir, stage=args.stage, force=args.force)
    s = report.summary
    if s["encoder"]["ratio"] is not None:
        print(f"encoder pretrain loss ratio: {s['encoder']['ratio']:.4f}")
    print(f"source final loss: {s['source']['final']:.4f}")
    print(f"stage1 reconstruction ratio: {s['stage1']['ratio']:.4f}")
    if s["stage2"] is not None:
        print(f"stage2 best val mIoU: {s['stage2']['best_val']:.4f}")
    print(f"report: {run_dir / 'report.jsonl'}")
    return 0


def _parse_kinds(text: str) -> list:
    kinds = [k for k in text.split(",") if k]
    for kind in kinds:
        if kind not in PROMPT_KINDS:
            raise TrainError(f"unknown prompt kind {kind!r}; "
                             f"choose from {PROMPT_KINDS}")
    return kinds


def _cmd_eval(args) -> int:
    cfg, run_dir = _resolve(args)
    kinds = _parse_kinds(args.prompts)
    model, enc, with_object, _ = load_eval_bundle(cfg, run_dir,
                                                  args.checkpoint)
    samples = load_split(run_dir, args.split)
    report = evaluate(model, enc, samples, kinds, cfg,
                      seed_from(cfg["seed"], "eval", args.split),
                      with_object=with_object)
    out_dir = run_dir / "eval" / f"{args.split}.{Path(args.checkpoint).stem}"
    write_report(report, out_dir)
    token = "on" if with_object else "off"
    print(f"split {args.split}, checkpoint {args.checkpoint} "
          f"(object token: {token})")
    for kind in sorted(report.miou):
        print(f"miou[{kind}] = {report.miou[kind]:.4f}")
    if report.ari_mean is not None:
        spread = (f" +- {report.ari_std:.4f}"
                  if report.ari_std is not None else "")
        print(f"foreground ari: {report.ari_mean:.4f}{spread}")
    print(f"report: {out_dir / 'eval_report.json'}")
    return 0


def _cmd_viz(args) -> int:
    cfg, run_dir = _resolve(args)
    model, enc, with_object, _ = load_eval_bundle(cfg, run_dir,
                                                  args.checkpoint)
    samples = load_split(run_dir, args.split)
    if not 0 <= args.index < len(samples):
        raise TrainError(f"sample index {args.index} out of range "
                         f"for split {args.split} ({len(samples)} samples)")
    arr = visualize_sample(model, enc, samples[args.index], cfg,
                           with_object=with_object)
    out = Path(args.out) if args.out else (
        run_dir / "viz" / f"{args.split}_{args.index:05d}.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_panel(out, arr)
    print(f"panel written to {out}")
    return 0


COMMANDS = {"gen-data": _cmd_gen_data, "train": _cmd_train,
            "eval": _cmd_eval, "viz": _cmd_viz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, TrainError, CheckpointError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
