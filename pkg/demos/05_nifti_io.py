"""Reading and writing volumes: single-file NIfTI-1 and raw float32."""
# %%
import tempfile
from pathlib import Path

import numpy as np

from voxelclean.io import read_nifti, read_raw, write_nifti, write_raw
from voxelclean.noisegen import PhantomSpec, make_phantom
from voxelclean.volume import Volume

tmp = Path(tempfile.mkdtemp())
vol = Volume(make_phantom(PhantomSpec(dims=(32, 32, 24))).astype(np.float32), voxel_size=(1.0, 1.0, 1.5))

# %% NIfTI: 348-byte header, 4 padding bytes, float32 voxels x-fastest
write_nifti(vol, tmp / "phantom.nii")
back = read_nifti(tmp / "phantom.nii")
print("size on disk", (tmp / "phantom.nii").stat().st_size, "= 352 +", 4 * vol.data.size)
print("bit-identical:", back.data.tobytes() == vol.data.tobytes(), " voxel size", back.voxel_size)

# %% Raw: no header, dims supplied by the caller
write_raw(vol, tmp / "phantom.raw")
print("raw bit-identical:", read_raw(tmp / "phantom.raw", vol.dims).data.tobytes() == vol.data.tobytes())
