"""Stage one: overcomplete patch-wise residual CNN denoising and noise-field estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnn import NetworkWeights, forward
from .noisegen import add_gaussian, sigma_for_level
from .volume import (aggregate_patches, box_mean, build_patch_grid, default_eps, extract_patches,
                     local_moments, normalize)

PREPROCESS_WINDOW = 6
PATCH_SIZE = 12
SIGMA_WINDOW = 3
SIGMA_SMOOTH = 9

# rational fit of the Rician correction factor against effective local SNR
PHI_THRESHOLD = 1.86
PHI_A = 0.9846
PHI_B = 0.1983
PHI_C = 0.1175


@dataclass
class DenoiseResult:
    denoised: np.ndarray
    residual: np.ndarray
    sigma_map: np.ndarray
    global_sigma: float


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def predict_noise(norm: np.ndarray, weights: NetworkWeights, stride: int = 3,
                  batch_size: int = 64) -> np.ndarray:
    """Aggregated network noise prediction for an already normalised volume."""
    if weights.config.patch_size != PATCH_SIZE:
        raise ValueError(f"model patch size {weights.config.patch_size} is not {PATCH_SIZE}")
    grid = build_patch_grid(norm.shape, PATCH_SIZE, stride)
    patches = extract_patches(norm, grid)
    preds = np.empty(patches.shape, dtype=np.float64)
    for start in range(0, len(patches), batch_size):
        preds[start:start + batch_size] = forward(weights, patches[start:start + batch_size])
    return aggregate_patches(preds, grid)


def denoise_pbcnn(noisy: np.ndarray, weights: NetworkWeights, stride: int = 3,
                  batch_size: int = 64) -> DenoiseResult:
    """Normalise by local moments, predict the noise patch-wise and subtract it.

    The predicted (normalised) noise is scaled back by the local standard
    deviation map; ``denoised = noisy - residual``.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    if noisy.ndim != 3 or min(noisy.shape) < PATCH_SIZE:
        raise ValueError(f"volume {noisy.shape} smaller than the {PATCH_SIZE}^3 patch")
    weights.check()
    maps = local_moments(noisy, PREPROCESS_WINDOW)
    eps = default_eps(noisy)
    norm = normalize(noisy, maps, eps)
    noise_norm = predict_noise(norm, weights, stride, batch_size)
    residual = noise_norm * np.maximum(maps.std_map, eps)
    denoised = noisy - residual
    sigma_map = estimate_sigma_map(noisy, residual)
    return DenoiseResult(denoised, residual, sigma_map, estimate_global_noise(residual))


def estimate_sigma_map(noisy: np.ndarray, residual: np.ndarray, window: int = SIGMA_WINDOW,
                       smooth: int = SIGMA_SMOOTH) -> np.ndarray:
    """Local residual standard deviation (``window``^3), smoothed over ``smooth``^3.

    Smoothing averages the local variance and takes the square root.
    """
    _same_shape(noisy, residual)
    local_var = local_moments(residual, window).std_map ** 2
    if smooth > 1:
        local_var = box_mean(local_var, smooth)
    return np.sqrt(np.maximum(local_var, 0.0))


def phi(gamma):
    """Correction factor from effective local SNR to the Rician-consistent noise level."""
    gamma = np.asarray(gamma, dtype=np.float64)
    d = gamma - PHI_THRESHOLD
    above = gamma > PHI_THRESHOLD
    out = np.where(above, (PHI_A * d + PHI_B) / np.where(above, d + PHI_C, 1.0), 0.0)
    return out if out.ndim else float(out)


def correct_sigma_rician(sigma_map: np.ndarray, noisy: np.ndarray,
                         gamma_window: int = SIGMA_SMOOTH,
                         mean_source: np.ndarray | None = None) -> np.ndarray:
    """Scale the residual-based noise map by ``phi`` of the effective local SNR.

    The SNR is the local mean of the noisy image over ``gamma_window``^3
    divided by the noise map.  A 3^3 mean makes the SNR estimate too noisy in
    the background, where it straddles the 1.86 cutoff; the default matches
    the noise-map smoothing window instead.  ``mean_source`` swaps in another
    image (e.g. the denoised one) for the local mean.
    """
    source = noisy if mean_source is None else mean_source
    _same_shape(sigma_map, noisy, source)
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    mean = box_mean(np.asarray(source, dtype=np.float64), gamma_window)
    eps = default_eps(noisy)
    gamma = mean / np.maximum(sigma_map, eps)
    return sigma_map * phi(gamma)


def rician_bias_correct(denoised: np.ndarray, sigma_map: np.ndarray) -> np.ndarray:
    _same_shape(denoised, sigma_map)
    d = np.asarray(denoised, dtype=np.float64)
    s = np.asarray(sigma_map, dtype=np.float64)
    return np.sqrt(np.maximum(d * d - 2.0 * s * s, 0.0))


def estimate_global_noise(residual: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Standard deviation of the residual over ``mask`` (whole volume by default)."""
    residual = np.asarray(residual, dtype=np.float64)
    values = residual if mask is None else residual[np.asarray(mask, dtype=bool)]
    if values.size == 0:
        raise ValueError("noise estimation mask is empty")
    return float(np.std(values))


def estimate_global_noise_rician(corrected_sigma_map: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean of the Rician-corrected noise map over ``mask``."""
    s = np.asarray(corrected_sigma_map, dtype=np.float64)
    values = s if mask is None else s[np.asarray(mask, dtype=bool)]
    if values.size == 0:
        raise ValueError("noise estimation mask is empty")
    return float(np.mean(values))


def normalized_pair(noisy: np.ndarray, clean: np.ndarray):
    """Network input and residual target, both scaled by the noisy image's local moments."""
    noisy = np.asarray(noisy, dtype=np.float64)
    maps = local_moments(noisy, PREPROCESS_WINDOW)
    eps = default_eps(noisy)
    scale = np.maximum(maps.std_map, eps)
    return (noisy - maps.mean_map) / scale, (noisy - clean) / scale


class PatchSampler:
    """Random training patches from clean volumes with blind Gaussian noise levels.

    Each epoch draws ``realisations`` noisy copies (random volume, level
    uniform in ``levels`` percent of ``peak``) and cuts
    ``patches_per_epoch`` random patches from them.
    """

    def __init__(self, clean_volumes: Sequence[np.ndarray], patches_per_epoch: int = 1024,
                 levels: tuple[float, float] = (1.0, 9.0), realisations: int = 4,
                 patch_size: int = PATCH_SIZE, peak: float = 255.0):
        if not clean_volumes:
            raise ValueError("no training volumes")
        self.volumes = [np.asarray(v, dtype=np.float64) for v in clean_volumes]
        if any(min(v.shape) < patch_size for v in self.volumes):
            raise ValueError("training volume smaller than the patch size")
        self.patches_per_epoch = patches_per_epoch
        self.levels = levels
        self.realisations = realisations
        self.patch_size = patch_size
        self.peak = peak

    def __call__(self, epoch: int, rng: np.random.Generator):
        p = self.patch_size
        counts = np.full(self.realisations, self.patches_per_epoch // self.realisations)
        counts[: self.patches_per_epoch % self.realisations] += 1
        inputs, targets = [], []
        for n in counts:
            clean = self.volumes[rng.integers(len(self.volumes))]
            sigma = sigma_for_level(rng.uniform(*self.levels), self.peak)
            noisy = add_gaussian(clean, sigma, seed=int(rng.integers(2**63)))
            x, t = normalized_pair(noisy, clean)
            for _ in range(n):
                o = [rng.integers(0, s - p + 1) for s in clean.shape]
                sl = tuple(slice(a, a + p) for a in o)
                inputs.append(x[sl])
                targets.append(t[sl])
        return np.asarray(inputs, dtype=np.float32), np.asarray(targets, dtype=np.float32)
