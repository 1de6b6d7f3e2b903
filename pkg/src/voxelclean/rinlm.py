"""Stage two: guided, rotationally invariant non-local means.

Similarity between voxels ``i`` and ``j`` is measured on the guide image
only, from the centre-intensity difference and the 3x-weighted difference of
local patch means::

    w(i, j) = exp(-[(g(i) - g(j))^2 + 3 (mu(i) - mu(j))^2] / (k h_i^2))

with ``k = 4`` by default (``exponent="dimension"`` uses ``k = 6``) and
``h_i = h_scale * sigma(i)``.  The averaged intensities come from the noisy
image ``y(j)`` over the search cube around ``i``, clipped at the borders.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .volume import box_mean, default_eps

_EXPONENT_DENOMINATOR = {"literal": 4.0, "dimension": 6.0}


@dataclass(frozen=True)
class RinlmConfig:
    search_radius: int = 5
    mean_radius: int = 1
    h_scale: float = 0.35
    exponent: str = "literal"

    def __post_init__(self):
        if self.search_radius < 1 or self.mean_radius < 1:
            raise ValueError("search and mean radii must be >= 1")
        if self.h_scale <= 0:
            raise ValueError("h_scale must be positive")
        if self.exponent not in _EXPONENT_DENOMINATOR:
            raise ValueError(f"exponent must be one of {sorted(_EXPONENT_DENOMINATOR)}")


def guide_mean_map(guide: np.ndarray, mean_radius: int = 1) -> np.ndarray:
    return box_mean(guide, 2 * mean_radius + 1)


def _half_offsets(radius: int):
    """One offset out of every ``(d, -d)`` pair, excluding zero."""
    for d in itertools.product(range(-radius, radius + 1), repeat=3):
        if d > (0, 0, 0):
            yield d


def _pair_slices(shape, d):
    """Slices selecting voxels ``i`` and their partners ``i + d`` that lie in bounds."""
    src, dst = [], []
    for n, k in zip(shape, d):
        if k >= 0:
            src.append(slice(0, n - k))
            dst.append(slice(k, n))
        else:
            src.append(slice(-k, n))
            dst.append(slice(0, n + k))
    return tuple(src), tuple(dst)


def _weighted_average(noisy, guide, sigma_map, cfg: RinlmConfig, power: int):
    y = np.asarray(noisy, dtype=np.float64)
    g = np.asarray(guide, dtype=np.float64)
    s = np.asarray(sigma_map, dtype=np.float64)
    if not (y.shape == g.shape == s.shape) or y.ndim != 3:
        raise ValueError(f"dimension mismatch: noisy {y.shape}, guide {g.shape}, sigma {s.shape}")
    if np.any(s < 0):
        raise ValueError("sigma map must be non-negative")

    mu = guide_mean_map(g, cfg.mean_radius)
    eps = default_eps(y)
    h = cfg.h_scale * np.maximum(s, eps)
    inv = 1.0 / (_EXPONENT_DENOMINATOR[cfg.exponent] * h * h)
    values = y ** power

    # j == i contributes weight exactly 1
    num = values.copy()
    den = np.ones_like(y)
    for d in _half_offsets(cfg.search_radius):
        a, b = _pair_slices(y.shape, d)
        dg = g[a] - g[b]
        dm = mu[a] - mu[b]
        dist = dg * dg + 3.0 * dm * dm
        # distance is symmetric; each side uses its own h
        w = np.exp(-dist * inv[a])
        num[a] += w * values[b]
        den[a] += w
        w = np.exp(-dist * inv[b])
        num[b] += w * values[a]
        den[b] += w
    return num / den, y, s, eps


def rinlm_denoise(noisy: np.ndarray, guide: np.ndarray, sigma_map: np.ndarray,
                  cfg: RinlmConfig = RinlmConfig()) -> np.ndarray:
    """Weighted average of noisy intensities with guide-derived weights.

    Voxels whose noise level is at or below the division guard are returned
    unchanged.
    """
    avg, y, s, eps = _weighted_average(noisy, guide, sigma_map, cfg, power=1)
    return np.where(s > eps, avg, y)


def rinlm_denoise_rician(noisy: np.ndarray, guide: np.ndarray, sigma_map: np.ndarray,
                         cfg: RinlmConfig = RinlmConfig()) -> np.ndarray:
    """Rician variant: average squared magnitudes, remove the ``2 sigma^2`` bias."""
    y = np.asarray(noisy, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("Rician filtering needs a non-negative magnitude image")
    avg_sq, y, s, eps = _weighted_average(y, guide, sigma_map, cfg, power=2)
    out = np.sqrt(np.maximum(avg_sq - 2.0 * s * s, 0.0))
    return np.where(s > eps, out, y)
