"""Two-stage denoising: patch CNN, then guided rotationally invariant NLM.

Run 02_train_toy_model.py first; pass the weight file as the argument.
"""
# %%
import sys

from voxelclean.cnn import load_weights
from voxelclean.metrics import MetricConfig, foreground, psnr
from voxelclean.noisegen import PhantomSpec, add_gaussian, add_rician, make_phantom, sigma_for_level
from voxelclean.pbcnn import denoise_pbcnn
from voxelclean.pipeline import denoise

weights = load_weights(sys.argv[1] if len(sys.argv) > 1 else "toy.pbcn")
clean = make_phantom(PhantomSpec(dims=(48, 48, 48), seed=100))
cfg = MetricConfig(mask=foreground(clean))

# %% Patch offset: denser patches average more predictions per voxel
noisy = add_gaussian(clean, sigma_for_level(9), seed=0)
print(f"noisy       {psnr(clean, noisy, cfg):.2f} dB")
for stride in (12, 6, 3):
    stage = denoise_pbcnn(noisy, weights, stride)
    print(f"offset {stride:2d}   {psnr(clean, stage.denoised, cfg):.2f} dB   global sigma {stage.global_sigma:.2f}")

# %% Second stage: the CNN output guides the NLM weights, noisy intensities are averaged
result = denoise(noisy, weights, method="pri-pbcnn", stride=3)
print(f"PRI-PBCNN   {psnr(clean, result.denoised, cfg):.2f} dB")

# %% Rician data: Phi-corrected noise map, bias-corrected guide, squared-magnitude average
rician = add_rician(clean, sigma_for_level(5), seed=1)
plain = denoise(rician, weights, stride=3)
corrected = denoise(rician, weights, stride=3, rician=True)
print(f"Rician 5%: noisy {psnr(clean, rician, cfg):.2f}, Gaussian path {psnr(clean, plain.denoised, cfg):.2f}, "
      f"Rician path {psnr(clean, corrected.denoised, cfg):.2f} dB")
