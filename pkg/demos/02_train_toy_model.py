"""Train a small patch CNN on synthetic phantoms.

The canonical network (64 filters, 7 blocks) is too slow to train on a CPU
in a demo, so this uses 16 filters and 4 blocks.  The network sees 12^3
patches normalised by 6^3 local moments and predicts the normalised noise.
"""
# %%
import sys
import time

import numpy as np

from voxelclean.cnn import ArchConfig, TrainConfig, parameter_count, canonical_architecture, save_weights, train
from voxelclean.noisegen import PhantomSpec, make_phantom
from voxelclean.pbcnn import PatchSampler

out = sys.argv[1] if len(sys.argv) > 1 else "toy.pbcn"
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 10

arch = ArchConfig(filters=16, blocks=4)
print("canonical parameters:", parameter_count(canonical_architecture()))
print("demo parameters:     ", parameter_count(canonical_architecture(arch.filters, arch.blocks)))

# %% Data: four phantoms for training, one for validation, noise 1-9% drawn per sample
train_vols = [make_phantom(PhantomSpec(dims=(64, 64, 64), seed=s)) for s in range(4)]
val_vol = make_phantom(PhantomSpec(dims=(64, 64, 64), seed=50))
sampler = PatchSampler(train_vols, patches_per_epoch=512, levels=(1, 9))
validation = PatchSampler([val_vol], 256)(0, np.random.default_rng(1))

# %% Train with Adam and early stopping on the validation loss
start = time.perf_counter()
result = train(sampler, validation, TrainConfig(batch_size=32, max_epochs=epochs, lr=2e-3, patience=5),
               arch, callback=lambda e, tr, va: print(f"epoch {e:3d}  train {tr:.4f}  val {va:.4f}"))
print(f"best epoch {result.best_epoch} in {time.perf_counter() - start:.0f}s")
save_weights(result.weights, out)
result.write_log(out + ".loss.csv")
print("saved", out)
