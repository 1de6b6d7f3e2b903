"""Shared fixtures: a desk-scale model trained once per code version and cached."""
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import voxelclean
from voxelclean.cnn import ArchConfig, TrainConfig, load_weights, save_weights, train
from voxelclean.noisegen import PhantomSpec, make_phantom
from voxelclean.pbcnn import PatchSampler

# Desk-scale training: six 64^3 phantoms, 25 epochs of 512 random patches.
TOY = {
    "filters": 16,
    "blocks": 4,
    "train_seeds": [0, 1, 2, 3, 4, 5],
    "val_seed": 50,
    "dims": [64, 64, 64],
    "patches_per_epoch": 512,
    "val_patches": 256,
    "epochs": 25,
    "batch": 32,
    "lr": 2e-3,
    "patience": 8,
    "seed": 0,
}

# phantoms used for evaluation never appear in training
HELD_OUT_SEEDS = (100, 101)

ACCEPTANCE_RESULTS = {}


def _code_fingerprint():
    root = Path(voxelclean.__file__).parent
    h = hashlib.sha256(json.dumps(TOY, sort_keys=True).encode())
    for rel in sorted(["cnn/layers.py", "cnn/network.py", "cnn/losses.py", "cnn/training.py",
                       "cnn/serialization.py", "pbcnn.py", "noisegen.py", "volume.py"]):
        h.update((root / rel).read_bytes())
    return h.hexdigest()[:16]


def train_toy_model():
    vols = [make_phantom(PhantomSpec(dims=tuple(TOY["dims"]), seed=s)) for s in TOY["train_seeds"]]
    val_vol = make_phantom(PhantomSpec(dims=tuple(TOY["dims"]), seed=TOY["val_seed"]))
    validation = PatchSampler([val_vol], TOY["val_patches"])(0, np.random.default_rng(99))
    cfg = TrainConfig(batch_size=TOY["batch"], max_epochs=TOY["epochs"], lr=TOY["lr"],
                      patience=TOY["patience"], seed=TOY["seed"])
    arch = ArchConfig(filters=TOY["filters"], blocks=TOY["blocks"])
    return train(PatchSampler(vols, TOY["patches_per_epoch"]), validation, cfg, arch)


@pytest.fixture(scope="session")
def toy_model(request):
    """(weights, path, history).  Set VOXELCLEAN_RETRAIN=1 to ignore the cache."""
    cache_dir = Path(request.config.cache.mkdir("voxelclean-toy-model"))
    path = cache_dir / f"toy-{_code_fingerprint()}.pbcn"
    log = path.with_suffix(".loss.csv")
    if path.exists() and log.exists() and os.environ.get("VOXELCLEAN_RETRAIN") != "1":
        history = np.loadtxt(log, delimiter=",", skiprows=1, ndmin=2)
        return load_weights(path), path, [tuple(row) for row in history]
    start = time.perf_counter()
    result = train_toy_model()
    save_weights(result.weights, path)
    result.write_log(log)
    print(f"\ntoy model trained in {time.perf_counter() - start:.0f}s, best epoch {result.best_epoch}")
    return result.weights, path, result.history


def record(criterion, passed, detail):
    ACCEPTANCE_RESULTS[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key:>2}: {detail}")
