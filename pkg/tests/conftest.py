"""Shared fixtures.

`tiny_run` is a fast end-to-end pipeline on a reduced configuration used
by module tests that need trained state, generated data or checkpoints.
`default_run` executes the full default-configuration pipeline once per
session (several minutes); only the acceptance suite requests it. Both
are lazy, so running a single module test never triggers training.
"""

import sys
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slotseg.config import Config
from slotseg.dataio import generate_datasets
from slotseg.training import fit

TINY_OVERRIDES = {
    "scene.height": 32,
    "scene.width": 32,
    "scene.min_objects": 2,
    "scene.max_objects": 3,
    "data.source_train": 6,
    "data.source_eval": 3,
    "data.target_train": 4,
    "data.target_val": 2,
    "data.target_eval": 3,
    "encoder.dim": 32,
    "encoder.depth": 1,
    "encoder.heads": 4,
    "encoder.patch": 4,
    "encoder.pretrain_steps": 2,
    "encoder.pretrain_batch": 2,
    "slot.count": 4,
    "slot.dim": 32,
    "slotdec.hidden": 64,
    "decoder.dim": 32,
    "decoder.heads": 4,
    "decoder.layers": 1,
    "decoder.ffn_hidden": 32,
    "inject.hidden": 32,
    "source.steps": 4,
    "source.batch": 2,
    "stage1.steps": 5,
    "stage1.batch": 2,
    "stage2.epochs": 2,
    "stage2.steps_per_epoch": 2,
    "stage2.batch": 2,
    "stage2.warm_frac": 0.5,
    "viz.every_epochs": 1,
}


def tiny_config(**extra) -> Config:
    data = dict(TINY_OVERRIDES)
    data.update(extra)
    return Config(data)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_run(tiny_cfg, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("tiny-run")
    cfg = tiny_cfg.overridden(run_dir=str(run_dir))
    generate_datasets(cfg, run_dir)
    report = fit(cfg, run_dir, stage="all")
    return SimpleNamespace(cfg=cfg, run_dir=run_dir, report=report)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Full default-configuration pipeline, timed per stage group."""
    run_dir = tmp_path_factory.mktemp("default-run")
    cfg = Config({"run_dir": str(run_dir)})
    t0 = time.time()
    generate_datasets(cfg, run_dir)
    gen_time = time.time() - t0

    t0 = time.time()
    fit(cfg, run_dir, stage="stage1")  # encoder + source + slot discovery
    stage1_time = time.time() - t0

    t0 = time.time()
    report = fit(cfg, run_dir, stage="stage2")  # cached phases + adaptation
    stage2_time = time.time() - t0
    return SimpleNamespace(cfg=cfg, run_dir=run_dir, report=report,
                           gen_time=gen_time, stage1_time=stage1_time,
                           stage2_time=stage2_time)
