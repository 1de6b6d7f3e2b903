"""Volume container, box-car local moments, normalization and patch grids.

Arrays are indexed ``[x, y, z]``.  When a volume is linearised (file I/O)
the x index varies fastest, i.e. ``data.ravel(order="F")``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Volume",
    "MomentMaps",
    "PatchGrid",
    "box_sum",
    "box_mean",
    "local_moments",
    "default_eps",
    "normalize",
    "denormalize",
    "build_patch_grid",
    "extract_patches",
    "aggregate_patches",
]


@dataclass
class Volume:
    """A 3D scalar field plus the metadata that travels with it on disk.

    ``header`` holds the raw NIfTI header bytes of the file it was read from
    (if any) so orientation fields survive a read-modify-write cycle.
    """

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    header: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"volume dims must be positive, got {self.data.shape}")
        self.voxel_size = tuple(float(v) for v in self.voxel_size)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.voxel_size, self.header)


@dataclass(frozen=True)
class MomentMaps:
    mean_map: np.ndarray
    std_map: np.ndarray
    window: int


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    stride: int
    dims: tuple[int, int, int]
    axis_origins: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def origins(self) -> np.ndarray:
        """All patch corners, shape ``(n, 3)``, x varying slowest."""
        mesh = np.meshgrid(*self.axis_origins, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __len__(self) -> int:
        return int(np.prod([len(o) for o in self.axis_origins]))

    def overlap_counts(self) -> np.ndarray:
        counts = []
        for n, origins in zip(self.dims, self.axis_origins):
            c = np.zeros(n + 1, dtype=np.int64)
            np.add.at(c, origins, 1)
            np.add.at(c, origins + self.patch_size, -1)
            counts.append(np.cumsum(c)[:n])
        cx, cy, cz = counts
        return cx[:, None, None] * cy[None, :, None] * cz[None, None, :]


def _window_offsets(window: int) -> tuple[int, int]:
    # even windows have no centre voxel: [-w/2, w/2 - 1]
    lo = -(window // 2)
    return lo, lo + window - 1


def _box_sum_axis(a: np.ndarray, axis: int, lo: int, hi: int) -> np.ndarray:
    n = a.shape[axis]
    c = np.cumsum(a, axis=axis)
    zero_shape = list(a.shape)
    zero_shape[axis] = 1
    c = np.concatenate([np.zeros(zero_shape, dtype=c.dtype), c], axis=axis)
    idx = np.arange(n)
    start = np.clip(idx + lo, 0, n)
    stop = np.clip(idx + hi + 1, 0, n)
    return np.take(c, stop, axis=axis) - np.take(c, start, axis=axis)


def box_sum(a: np.ndarray, window: int) -> np.ndarray:
    """Sum over the ``window``-edge box around every voxel, truncated at borders."""
    lo, hi = _window_offsets(window)
    out = np.asarray(a, dtype=np.float64)
    for axis in range(out.ndim):
        out = _box_sum_axis(out, axis, lo, hi)
    return out


def _box_counts(shape: Sequence[int], window: int) -> np.ndarray:
    lo, hi = _window_offsets(window)
    counts = []
    for n in shape:
        idx = np.arange(n)
        counts.append(np.minimum(idx + hi, n - 1) - np.maximum(idx + lo, 0) + 1)
    out = np.ones(tuple(shape), dtype=np.float64)
    for axis, c in enumerate(counts):
        view = [1] * len(shape)
        view[axis] = len(c)
        out = out * c.reshape(view)
    return out


def box_mean(a: np.ndarray, window: int) -> np.ndarray:
    """Box-car mean over in-bounds voxels only (no padding)."""
    a = np.asarray(a, dtype=np.float64)
    return box_sum(a, window) / _box_counts(a.shape, window)


def local_moments(vol: np.ndarray, window: int = 6) -> MomentMaps:
    """Local mean and population standard deviation over a box-car window.

    Neighbourhoods are truncated at the volume border.  For an even window
    the neighbourhood of voxel ``v`` spans ``[v - w/2, v + w/2 - 1]``.
    """
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 3:
        raise ValueError(f"expected a 3D volume, got shape {vol.shape}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window > max(vol.shape):
        raise ValueError(f"window {window} larger than every dimension of {vol.shape}")
    if not np.all(np.isfinite(vol)):
        raise ValueError("volume contains non-finite values")

    # shift by the global mean to limit cancellation in E[x^2] - E[x]^2
    shift = float(np.mean(vol))
    if np.all(vol == vol.flat[0]):
        shift = float(vol.flat[0])
    centred = vol - shift
    counts = _box_counts(vol.shape, window)
    m1 = box_sum(centred, window) / counts
    m2 = box_sum(centred * centred, window) / counts
    var = np.maximum(m2 - m1 * m1, 0.0)
    return MomentMaps(mean_map=m1 + shift, std_map=np.sqrt(var), window=window)


def default_eps(vol: np.ndarray) -> float:
    """Scale-aware division guard: 1e-5 of the global std, floored at 1e-12."""
    return max(1e-5 * float(np.std(vol)), 1e-12)


def _check_same_dims(*arrays: np.ndarray) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def normalize(vol: np.ndarray, maps: MomentMaps, eps: float) -> np.ndarray:
    vol = np.asarray(vol, dtype=np.float64)
    _check_same_dims(vol, maps.mean_map, maps.std_map)
    return (vol - maps.mean_map) / np.maximum(maps.std_map, eps)


def denormalize(norm_vol: np.ndarray, maps: MomentMaps, eps: float) -> np.ndarray:
    norm_vol = np.asarray(norm_vol, dtype=np.float64)
    _check_same_dims(norm_vol, maps.mean_map, maps.std_map)
    return norm_vol * np.maximum(maps.std_map, eps) + maps.mean_map


def build_patch_grid(dims: Sequence[int], patch_size: int = 12, stride: int = 6) -> PatchGrid:
    """Regular patch origins with a clamped final patch on each axis."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"expected 3 dims, got {dims}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if patch_size < 1 or any(patch_size > d for d in dims):
        raise ValueError(f"patch size {patch_size} does not fit in volume {dims}")
    axis_origins = []
    for d in dims:
        last = d - patch_size
        origins = np.arange(0, last + 1, stride)
        if origins[-1] != last:
            origins = np.append(origins, last)
        axis_origins.append(origins)
    return PatchGrid(patch_size, stride, dims, tuple(axis_origins))


def extract_patches(vol: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Patches in grid order, shape ``(n, p, p, p)``."""
    vol = np.asarray(vol)
    if vol.shape != grid.dims:
        raise ValueError(f"volume {vol.shape} does not match grid dims {grid.dims}")
    p = grid.patch_size
    view = np.lib.stride_tricks.sliding_window_view(vol, (p, p, p))
    ox, oy, oz = grid.axis_origins
    patches = view[np.ix_(ox, oy, oz)]
    return patches.reshape(-1, p, p, p)


def aggregate_patches(patches: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Average overlapping patch estimates back into a volume.

    Summation runs in grid order, so the result is deterministic.
    """
    patches = np.asarray(patches, dtype=np.float64)
    p = grid.patch_size
    if patches.shape != (len(grid), p, p, p):
        raise ValueError(
            f"expected {len(grid)} patches of size {p}^3, got array of shape {patches.shape}"
        )
    acc = np.zeros(grid.dims, dtype=np.float64)
    for patch, (x, y, z) in zip(patches, grid.origins):
        acc[x:x + p, y:y + p, z:z + p] += patch
    return acc / grid.overlap_counts()
