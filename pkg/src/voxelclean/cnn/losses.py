"""Regression losses: MSE, MAE and their sum ("mix")."""
from __future__ import annotations

import numpy as np

KINDS = ("mse", "mae", "mix")


def _check(pred, target, kind):
    if kind not in KINDS:
        raise ValueError(f"unknown loss {kind!r}, expected one of {KINDS}")
    if np.shape(pred) != np.shape(target):
        raise ValueError(f"shape mismatch: {np.shape(pred)} vs {np.shape(target)}")


def loss(pred: np.ndarray, target: np.ndarray, kind: str = "mix") -> float:
    _check(pred, target, kind)
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))
    return {"mse": mse, "mae": mae, "mix": mse + mae}[kind]


def loss_grad(pred: np.ndarray, target: np.ndarray, kind: str = "mix") -> np.ndarray:
    _check(pred, target, kind)
    diff = pred - target
    n = diff.size
    g = np.zeros_like(diff)
    if kind in ("mse", "mix"):
        g += (2.0 / n) * diff
    if kind in ("mae", "mix"):
        g += np.sign(diff) / n
    return g
