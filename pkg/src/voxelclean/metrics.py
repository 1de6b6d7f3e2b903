"""RMSE, PSNR and 3D SSIM over an optional foreground mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import box_mean


@dataclass(frozen=True)
class MetricConfig:
    peak: float = 255.0
    mask: np.ndarray | None = None
    ssim_window: int = 7

    def __post_init__(self):
        if self.peak <= 0:
            raise ValueError("peak must be positive")

    @property
    def c1(self) -> float:
        return (0.01 * self.peak) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.peak) ** 2


def foreground(ref: np.ndarray, threshold: float = 10.0) -> np.ndarray:
    """Foreground mask: voxels of the reference above ``threshold``."""
    return np.asarray(ref) > threshold


def _masked(values: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return values.ravel()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError(f"mask shape {mask.shape} does not match volume {values.shape}")
    out = values[mask]
    if out.size == 0:
        raise ValueError("metric mask is empty")
    return out


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {test.shape}")
    return ref, test


def rmse(ref: np.ndarray, test: np.ndarray, mask: np.ndarray | None = None) -> float:
    ref, test = _pair(ref, test)
    diff = _masked(ref - test, mask)
    return float(np.sqrt(np.mean(diff * diff)))


def psnr(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for a perfect match."""
    err = rmse(ref, test, cfg.mask)
    if err == 0:
        return float("inf")
    return float(20.0 * np.log10(cfg.peak / err))


def ssim_map(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> np.ndarray:
    """Local SSIM from box-window statistics, windows truncated at the border."""
    x, y = _pair(ref, test)
    w = cfg.ssim_window
    mx = box_mean(x, w)
    my = box_mean(y, w)
    vx = box_mean(x * x, w) - mx * mx
    vy = box_mean(y * y, w) - my * my
    cxy = box_mean(x * y, w) - mx * my
    num = (2 * mx * my + cfg.c1) * (2 * cxy + cfg.c2)
    den = (mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2)
    return num / den


def ssim(ref: np.ndarray, test: np.ndarray, cfg: MetricConfig = MetricConfig()) -> float:
    return float(np.mean(_masked(ssim_map(ref, test, cfg), cfg.mask)))
