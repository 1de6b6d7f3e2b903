"""Synthetic phantoms, noise models and the PSNR convention.

Noise level "p%" means a standard deviation of p/100 of the 255 peak, so the
PSNR of a Gaussian-corrupted volume is 20*log10(100/p) no matter what the
underlying image looks like.
"""
# %%
import numpy as np

from voxelclean.metrics import MetricConfig, foreground, psnr, ssim
from voxelclean.noisegen import (NoiseField, PhantomSpec, add_gaussian, add_rician,
                                 make_modulation_field, make_phantom, sigma_for_level)

clean = make_phantom(PhantomSpec(dims=(96, 96, 96), seed=0))
mask = foreground(clean)
print(f"phantom {clean.shape}, peak {clean.max():.0f}, foreground {mask.mean():.0%}")

# %% Gaussian noise: measured PSNR against the analytic value
cfg = MetricConfig(mask=mask)
for p in (1, 3, 5, 7, 9):
    noisy = add_gaussian(clean, sigma_for_level(p), seed=p)
    print(f"{p}%  PSNR {psnr(clean, noisy, cfg):6.2f}  analytic {20 * np.log10(100 / p):6.2f}"
          f"  SSIM {ssim(clean, noisy, cfg):.3f}")

# %% Rician noise biases the background upwards (Rayleigh mean ~1.25 sigma)
sigma = sigma_for_level(5)
rician = add_rician(clean, sigma, seed=1)
background = clean < 1
print(f"background mean {rician[background].mean() / sigma:.3f} sigma")

# %% Spatially varying noise: a 1 -> 3 ramp along z
mod = make_modulation_field(clean.shape, 1.0, 3.0, profile="ramp", axis=2)
varying = add_rician(clean, NoiseField(sigma * mod, "rician"), seed=2)
for z in (0, 47, 95):
    print(f"slice z={z}: sigma {sigma * mod[0, 0, z]:.2f}")
