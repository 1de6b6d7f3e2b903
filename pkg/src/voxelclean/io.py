"""Single-file NIfTI-1 (.nii) and headerless raw float32 volume I/O.

Only datatypes 4 (int16) and 16 (float32) are supported.  Voxels are
stored x-fastest.  Orientation fields of a header read from disk are kept
verbatim when the same ``Volume`` is written back.
"""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .volume import Volume

HEADER_SIZE = 348
VOX_OFFSET = 352
DEFAULT_SIZE_CAP = 4 * 1024 ** 3

DATATYPES = {4: np.dtype("i2"), 16: np.dtype("f4")}

HEADER_FIELDS = [
    ("sizeof_hdr", "i4"), ("data_type", "S10"), ("db_name", "S18"), ("extents", "i4"),
    ("session_error", "i2"), ("regular", "S1"), ("dim_info", "u1"), ("dim", "i2", (8,)),
    ("intent_p1", "f4"), ("intent_p2", "f4"), ("intent_p3", "f4"), ("intent_code", "i2"),
    ("datatype", "i2"), ("bitpix", "i2"), ("slice_start", "i2"), ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"), ("scl_slope", "f4"), ("scl_inter", "f4"), ("slice_end", "i2"),
    ("slice_code", "u1"), ("xyzt_units", "u1"), ("cal_max", "f4"), ("cal_min", "f4"),
    ("slice_duration", "f4"), ("toffset", "f4"), ("glmax", "i4"), ("glmin", "i4"),
    ("descrip", "S80"), ("aux_file", "S24"), ("qform_code", "i2"), ("sform_code", "i2"),
    ("quatern_b", "f4"), ("quatern_c", "f4"), ("quatern_d", "f4"), ("qoffset_x", "f4"),
    ("qoffset_y", "f4"), ("qoffset_z", "f4"), ("srow_x", "f4", (4,)), ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)), ("intent_name", "S16"), ("magic", "S4"),
]


def header_dtype(byteorder: str = "<") -> np.dtype:
    return np.dtype([(f[0], byteorder + f[1] if f[1][0] not in "S" else f[1], *f[2:])
                     for f in HEADER_FIELDS])


class NiftiError(ValueError):
    pass


def parse_header(raw: bytes) -> tuple[np.ndarray, str]:
    """Decode a 348-byte header, detecting endianness from ``sizeof_hdr``."""
    if len(raw) < HEADER_SIZE:
        raise NiftiError(f"file too short for a NIfTI-1 header ({len(raw)} bytes)")
    for order in "<>":
        hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=header_dtype(order))[0]
        if int(hdr["sizeof_hdr"]) == HEADER_SIZE:
            return hdr, order
    raise NiftiError("bad header size field (not a NIfTI-1 file)")


def _dims_from_header(hdr) -> tuple[int, int, int]:
    dim = [int(d) for d in hdr["dim"]]
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiError(f"invalid dim[0] = {ndim}")
    shape = dim[1:ndim + 1]
    if any(d < 1 for d in shape):
        raise NiftiError(f"non-positive dimension in {shape}")
    if any(d != 1 for d in shape[3:]):
        raise NiftiError(f"only single 3D volumes are supported, got dims {shape}")
    shape = (shape + [1, 1, 1])[:3]
    return tuple(shape)


def read_nifti(path, size_cap: int = DEFAULT_SIZE_CAP) -> Volume:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read(VOX_OFFSET)
            hdr, order = parse_header(raw)
            if bytes(hdr["magic"]) != b"n+1":
                raise NiftiError(f"{path}: bad magic {bytes(hdr['magic'])!r}, expected single-file 'n+1'")
            code = int(hdr["datatype"])
            if code not in DATATYPES:
                raise NiftiError(f"{path}: unsupported datatype code {code}")
            dtype = DATATYPES[code].newbyteorder(order)
            dims = _dims_from_header(hdr)
            offset = float(hdr["vox_offset"])
            file_size = os.fstat(fh.fileno()).st_size
            if not np.isfinite(offset) or offset < VOX_OFFSET or offset != int(offset):
                raise NiftiError(f"{path}: invalid vox_offset {offset}")
            if offset > file_size:
                raise NiftiError(f"{path}: vox_offset {offset:.0f} beyond end of file ({file_size} bytes)")
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if nbytes > size_cap:
                raise NiftiError(f"{path}: data size {nbytes} bytes exceeds cap {size_cap}")
            fh.seek(int(offset))
            payload = fh.read(nbytes)
    except OSError as exc:
        raise NiftiError(f"{path}: {exc.strerror or exc}") from exc
    if len(payload) != nbytes:
        raise NiftiError(f"{path}: truncated data ({len(payload)} of {nbytes} bytes)")

    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if code == 16 and (slope == 0 or (slope == 1 and inter == 0)):
        values = data.astype(np.float32)
    else:
        values = data.astype(np.float64)
        if slope != 0 and np.isfinite(slope) and np.isfinite(inter):
            values = values * slope + inter
    if not np.all(np.isfinite(values)):
        raise NiftiError(f"{path}: non-finite voxel values")
    pixdim = tuple(float(p) if np.isfinite(p) and p > 0 else 1.0 for p in hdr["pixdim"][1:4])
    native = hdr.astype(header_dtype("<")).tobytes()
    return Volume(values, pixdim, native + b"\x00" * (VOX_OFFSET - HEADER_SIZE))


def write_nifti(vol: Volume | np.ndarray, path) -> None:
    """Write float32 little-endian single-file NIfTI-1 (vox_offset 352)."""
    if not isinstance(vol, Volume):
        vol = Volume(np.asarray(vol))
    if vol.header is not None:
        hdr = np.frombuffer(vol.header[:HEADER_SIZE], dtype=header_dtype("<"))[0].copy()
    else:
        hdr = np.zeros((), dtype=header_dtype("<"))
        hdr["pixdim"][0] = 1.0
        hdr["xyzt_units"] = 2  # mm
    dims = vol.dims
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["dim"] = [3, *dims, 1, 1, 1, 1]
    hdr["datatype"] = 16
    hdr["bitpix"] = 32
    hdr["pixdim"][1:4] = vol.voxel_size
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["magic"] = b"n+1"
    data = np.asarray(vol.data, dtype="<f4")
    path = os.fspath(path)
    try:
        with open(path, "wb") as fh:
            fh.write(hdr.tobytes())
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(data.tobytes(order="F"))
    except OSError as exc:
        raise NiftiError(f"{path}: cannot write ({exc.strerror or exc})") from exc


def _check_dims(dims: Sequence[int]) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    return dims


def read_raw(path, dims: Sequence[int]) -> Volume:
    dims = _check_dims(dims)
    path = os.fspath(path)
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    size = os.path.getsize(path)
    if size != expected:
        raise ValueError(f"{path}: {size} bytes does not match dims {dims} ({expected} bytes)")
    data = np.fromfile(path, dtype="<f4").reshape(dims, order="F")
    return Volume(data.astype(np.float32))


def write_raw(vol: Volume | np.ndarray, path) -> None:
    data = vol.data if isinstance(vol, Volume) else np.asarray(vol)
    _check_dims(data.shape)
    np.asarray(data, dtype="<f4").ravel(order="F").tofile(os.fspath(path))


def read_volume(path, dims: Sequence[int] | None = None) -> Volume:
    """Dispatch on extension: ``.nii`` files are NIfTI, anything else raw (needs ``dims``)."""
    path = os.fspath(path)
    if path.endswith(".nii"):
        return read_nifti(path)
    if path.endswith(".nii.gz"):
        raise NiftiError(f"{path}: compressed NIfTI is not supported, decompress it first")
    if dims is None:
        raise ValueError(f"{path}: raw volumes need explicit dims")
    return read_raw(path, dims)


def write_volume(vol: Volume | np.ndarray, path) -> None:
    if os.fspath(path).endswith(".nii"):
        write_nifti(vol, path)
    else:
        write_raw(vol, path)
