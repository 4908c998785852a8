"""Shared fixtures. The trained toy model is expensive (minutes), so it is
session-scoped and cached on disk; delete tests/_cache to force a retrain."""

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from setscene import inference as inf
from setscene import model as md
from setscene import scenes as sc
from setscene import training as tr

CACHE = Path(__file__).parent / "_cache"

# Training recipe for the learned-behavior tests: 2000 scenes, seed 0, at
# most 5000 iterations, one CPU core. lr/batch chosen by experiment; the
# lr=1e-4/batch=32 defaults underfit spatial precision within this
# iteration budget, and turning rotation augmentation off overfits (val
# NLL degrades past iteration 2000). batch 96+ would exceed the 15-minute
# wall budget on one core.
TOY_RECIPE = dict(lr=1e-3, batch_size=80, max_iterations=5000, seed=0)


def _dataset_fingerprint(scenes):
    """Cheap stand-in for hashing the whole dataset: first/last scene + size."""
    head = json.dumps([sc.scene_to_json(scenes[0]), sc.scene_to_json(scenes[-1])],
                      sort_keys=True)
    return hashlib.sha256(f"{len(scenes)}|{head}".encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def toy_train_scenes():
    return sc.generate_toy_dataset(sc.ToyRuleSpec(seed=0), 2000)


@pytest.fixture(scope="session")
def toy_holdout_scenes():
    return sc.generate_toy_dataset(sc.ToyRuleSpec(seed=1), 500)


@pytest.fixture(scope="session")
def trained_toy(toy_train_scenes):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "toy_default.ckpt"
    fingerprint = _dataset_fingerprint(toy_train_scenes)
    if path.exists():
        params = md.load_checkpoint(path)
        meta = params.metadata
        if (meta.get("train_recipe") == TOY_RECIPE
                and meta.get("train_data_fingerprint") == fingerprint
                and "likelihood_p5" in meta):
            return params
    t0 = time.perf_counter()
    params = md.init_parameters(md.ModelConfig(n_categories=3), seed=0)
    cfg = tr.TrainConfig(**TOY_RECIPE)
    train_part = toy_train_scenes[:1800]
    val_part = toy_train_scenes[1800:]
    params, _ = tr.train(train_part, params, cfg, val_scenes=val_part)
    inf.calibrate_anomaly_threshold(params, val_part)
    params.metadata["train_recipe"] = dict(TOY_RECIPE)
    params.metadata["train_data_fingerprint"] = fingerprint
    params.metadata["train_wall_seconds"] = time.perf_counter() - t0
    md.save_checkpoint(params, path)
    return params


@pytest.fixture(scope="session")
def trained_ckpt_path(trained_toy):
    return CACHE / "toy_default.ckpt"
