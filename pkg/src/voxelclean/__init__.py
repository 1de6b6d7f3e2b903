"""voxelclean: patch-based residual 3D CNN plus guided rotationally invariant NLM for MRI denoising."""

__version__ = "0.1.0"

from .io import read_volume, write_volume
from .metrics import MetricConfig, psnr, rmse, ssim
from .noisegen import NoiseField, PhantomSpec, add_gaussian, add_rician, make_modulation_field, make_phantom
from .pbcnn import denoise_pbcnn
from .pipeline import PipelineResult, denoise
from .rinlm import RinlmConfig, rinlm_denoise, rinlm_denoise_rician
from .volume import Volume

__all__ = [
    "MetricConfig", "NoiseField", "PhantomSpec", "PipelineResult", "RinlmConfig", "Volume",
    "add_gaussian", "add_rician", "denoise", "denoise_pbcnn", "make_modulation_field", "make_phantom",
    "psnr", "read_volume", "rinlm_denoise", "rinlm_denoise_rician", "rmse", "ssim", "write_volume",
]
