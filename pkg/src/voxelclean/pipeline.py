"""End-to-end denoising: CNN prefilter, optional Rician handling, guided NLM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cnn import NetworkWeights
from .pbcnn import (correct_sigma_rician, denoise_pbcnn, estimate_global_noise,
                    estimate_global_noise_rician, estimate_sigma_map, rician_bias_correct)
from .rinlm import RinlmConfig, rinlm_denoise, rinlm_denoise_rician

METHODS = ("pbcnn", "pri-pbcnn")


@dataclass
class PipelineResult:
    denoised: np.ndarray
    prefiltered: np.ndarray
    residual: np.ndarray
    sigma_map: np.ndarray
    global_sigma: float


def denoise(noisy: np.ndarray, weights: NetworkWeights | None = None, method: str = "pri-pbcnn",
            stride: int = 3, rician: bool = False, rinlm: RinlmConfig = RinlmConfig(),
            guide: np.ndarray | None = None, mask: np.ndarray | None = None,
            sigma: float | np.ndarray | None = None) -> PipelineResult:
    """Run the full filter.

    ``guide`` replaces the CNN stage with a precomputed stage-one output
    (before any Rician bias correction); ``weights`` is then unused.
    With ``rician`` the noise map is Phi-corrected, the prefiltered image is
    bias corrected, and the squared-magnitude NLM variant is used.
    A known ``sigma`` (scalar or map) replaces the residual-based estimate
    and is used as is, without the Phi correction.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    noisy = np.asarray(noisy, dtype=np.float64)
    if guide is None:
        if weights is None:
            raise ValueError("either model weights or a guide image is required")
        stage = denoise_pbcnn(noisy, weights, stride)
        prefiltered, residual = stage.denoised, stage.residual
    else:
        prefiltered = np.asarray(guide, dtype=np.float64)
        if prefiltered.shape != noisy.shape:
            raise ValueError(f"guide dims {prefiltered.shape} differ from input {noisy.shape}")
        residual = noisy - prefiltered

    if sigma is not None:
        sigma_map = np.broadcast_to(np.asarray(sigma, dtype=np.float64), noisy.shape).copy()
    else:
        sigma_map = estimate_sigma_map(noisy, residual)
        if rician:
            sigma_map = correct_sigma_rician(sigma_map, noisy)
    if rician:
        prefiltered = rician_bias_correct(np.maximum(prefiltered, 0.0), sigma_map)
        global_sigma = estimate_global_noise_rician(sigma_map, mask)
    else:
        global_sigma = estimate_global_noise(residual, mask)

    if method == "pbcnn":
        out = prefiltered
    elif rician:
        out = rinlm_denoise_rician(noisy, prefiltered, sigma_map, rinlm)
    else:
        out = rinlm_denoise(noisy, prefiltered, sigma_map, rinlm)
    return PipelineResult(out, prefiltered, residual, sigma_map, global_sigma)
