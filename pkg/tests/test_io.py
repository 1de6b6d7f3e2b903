import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from voxelclean.io import (
    HEADER_SIZE,
    VOX_OFFSET,
    NiftiError,
    read_nifti,
    read_raw,
    read_volume,
    write_nifti,
    write_raw,
    write_volume,
)
from voxelclean.volume import Volume


def handmade_nifti(dims, datatype, payload, order="<", slope=0.0, inter=0.0,
                   pixdim=(1.0, 1.0, 1.0), magic=b"n+1\x00", vox_offset=352.0):
    """Byte-level NIfTI-1 header written field by field from the format layout."""
    hdr = bytearray(348)
    struct.pack_into(order + "i", hdr, 0, 348)
    struct.pack_into(order + "8h", hdr, 40, len(dims), *dims, *([1] * (7 - len(dims))))
    bitpix = {4: 16, 16: 32}.get(datatype, 8)
    struct.pack_into(order + "hh", hdr, 70, datatype, bitpix)
    struct.pack_into(order + "8f", hdr, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into(order + "fff", hdr, 108, vox_offset, slope, inter)
    hdr[344:348] = magic
    return bytes(hdr) + b"\x00" * 4 + payload


# --- round trips --------------------------------------------------------------

def test_nifti_round_trip_bit_exact(tmp_path):
    data = np.random.default_rng(0).standard_normal((7, 5, 3)).astype(np.float32)
    data[0, 0, 0] = np.float32(1e-40)  # subnormal
    data[1, 0, 0] = -0.0
    path = tmp_path / "v.nii"
    write_nifti(Volume(data, (0.5, 1.0, 2.0)), path)
    assert path.stat().st_size == VOX_OFFSET + 4 * data.size
    back = read_nifti(path)
    assert back.data.dtype == np.float32
    assert back.data.tobytes() == data.tobytes()
    assert back.voxel_size == (0.5, 1.0, 2.0)


def test_raw_round_trip_bit_exact(tmp_path):
    data = np.random.default_rng(1).standard_normal((4, 6, 5)).astype(np.float32)
    path = tmp_path / "v.raw"
    write_raw(data, path)
    assert path.stat().st_size == 4 * data.size
    assert read_raw(path, data.shape).data.tobytes() == data.tobytes()


def test_raw_is_x_fastest(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = tmp_path / "v.raw"
    write_raw(data, path)
    flat = np.fromfile(path, dtype="<f4")
    assert flat[1] == data[1, 0, 0]
    assert flat[2] == data[0, 1, 0]


def test_raw_size_mismatch(tmp_path):
    path = tmp_path / "v.raw"
    write_raw(np.zeros((2, 2, 2), dtype=np.float32), path)
    with pytest.raises(ValueError):
        read_raw(path, (2, 2, 3))


def test_header_preserved_on_rewrite(tmp_path):
    src = tmp_path / "a.nii"
    raw = bytearray(handmade_nifti((2, 2, 2), 16, np.zeros(8, "<f4").tobytes()))
    struct.pack_into("<h", raw, 252, 1)  # qform_code
    struct.pack_into("<3f", raw, 268, 10.0, -20.0, 30.0)  # qoffset
    src.write_bytes(bytes(raw))
    vol = read_nifti(src)
    dst = tmp_path / "b.nii"
    write_nifti(vol.with_data(np.ones((2, 2, 2), np.float32)), dst)
    out = dst.read_bytes()
    assert struct.unpack_from("<h", out, 252)[0] == 1
    assert struct.unpack_from("<3f", out, 268) == (10.0, -20.0, 30.0)


def test_dispatch(tmp_path):
    data = np.random.default_rng(2).random((3, 3, 3)).astype(np.float32)
    write_volume(data, tmp_path / "a.nii")
    write_volume(data, tmp_path / "a.raw")
    np.testing.assert_array_equal(read_volume(tmp_path / "a.nii").data, data)
    np.testing.assert_array_equal(read_volume(tmp_path / "a.raw", (3, 3, 3)).data, data)
    with pytest.raises(ValueError):
        read_volume(tmp_path / "a.raw")
    with pytest.raises(NiftiError):
        read_volume(tmp_path / "a.nii.gz")


# --- hand-decoded fixtures ----------------------------------------------------

def test_int16_scaled(tmp_path):
    payload = np.array([5, -3, 0, 7, 1, 2, 3, 4], dtype="<i2").tobytes()
    path = tmp_path / "i.nii"
    path.write_bytes(handmade_nifti((2, 2, 2), 4, payload, slope=2.0, inter=1.0))
    vol = read_nifti(path)
    assert vol.data[0, 0, 0] == 11.0
    assert vol.data[1, 0, 0] == -5.0
    assert vol.data[0, 1, 0] == 1.0


def test_int16_zero_slope_means_unscaled(tmp_path):
    payload = np.array([5, 6], dtype="<i2").tobytes()
    path = tmp_path / "i.nii"
    path.write_bytes(handmade_nifti((2, 1, 1), 4, payload))
    assert read_nifti(path).data.ravel().tolist() == [5.0, 6.0]


def test_big_endian(tmp_path):
    values = np.array([1.5, -2.25, 3.0, 4.0, 5.0, 6.0], dtype=">f4")
    path = tmp_path / "b.nii"
    path.write_bytes(handmade_nifti((3, 2, 1), 16, values.tobytes(), order=">", pixdim=(0.9, 0.9, 3.0)))
    vol = read_nifti(path)
    assert vol.dims == (3, 2, 1)
    assert vol.data[1, 0, 0] == -2.25
    assert vol.data[0, 1, 0] == 4.0
    assert vol.voxel_size == pytest.approx((0.9, 0.9, 3.0))
    # rewritten little-endian, values intact
    out = tmp_path / "c.nii"
    write_nifti(vol, out)
    np.testing.assert_array_equal(read_nifti(out).data, vol.data)


def test_four_d_singleton_accepted(tmp_path):
    path = tmp_path / "f.nii"
    path.write_bytes(handmade_nifti((2, 2, 2, 1), 16, np.zeros(8, "<f4").tobytes()))
    assert read_nifti(path).dims == (2, 2, 2)


# --- rejected inputs ----------------------------------------------------------

@pytest.mark.parametrize("kwargs, message", [
    (dict(magic=b"ni1\x00"), "magic"),
    (dict(datatype=64), "datatype"),
    (dict(dims=(2, 2, 2, 3)), "3D"),
    (dict(vox_offset=100.0), "vox_offset"),
])
def test_rejections(tmp_path, kwargs, message):
    args = dict(dims=(2, 2, 2), datatype=16, payload=np.zeros(24, "<f4").tobytes())
    args.update(kwargs)
    path = tmp_path / "x.nii"
    path.write_bytes(handmade_nifti(**args))
    with pytest.raises(NiftiError, match=message):
        read_nifti(path)


def test_offset_beyond_file(tmp_path):
    path = tmp_path / "o.nii"
    path.write_bytes(handmade_nifti((2, 2, 2), 16, np.zeros(8, "<f4").tobytes(), vox_offset=3e18))
    with pytest.raises(NiftiError, match="vox_offset"):
        read_nifti(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.nii"
    path.write_bytes(handmade_nifti((4, 4, 4), 16, np.zeros(10, "<f4").tobytes()))
    with pytest.raises(NiftiError, match="truncated"):
        read_nifti(path)


def test_size_cap(tmp_path):
    path = tmp_path / "s.nii"
    path.write_bytes(handmade_nifti((1000, 1000, 1000), 16, b""))
    with pytest.raises(NiftiError, match="cap"):
        read_nifti(path, size_cap=1024)


def test_missing_file(tmp_path):
    with pytest.raises(NiftiError):
        read_nifti(tmp_path / "nope.nii")


def test_short_file(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x5c\x01\x00\x00")
    with pytest.raises(NiftiError):
        read_nifti(path)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(data=st.data())
def test_fuzz_corrupt_headers_never_crash(tmp_path, data):
    valid = bytearray(handmade_nifti((3, 3, 3), 16, np.ones(27, "<f4").tobytes()))
    n_flips = data.draw(st.integers(1, 12))
    for _ in range(n_flips):
        pos = data.draw(st.integers(0, len(valid) - 1))
        valid[pos] = data.draw(st.integers(0, 255))
    cut = data.draw(st.integers(0, len(valid)))
    path = tmp_path / "fuzz.nii"
    path.write_bytes(bytes(valid[:cut]))
    try:
        vol = read_nifti(path, size_cap=1 << 20)
    except NiftiError:
        return
    assert vol.data.ndim == 3
    assert np.all(np.isfinite(vol.data))


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(blob=st.binary(min_size=0, max_size=600))
def test_fuzz_random_bytes(tmp_path, blob):
    path = tmp_path / "rand.nii"
    path.write_bytes(blob)
    with pytest.raises(NiftiError):
        read_nifti(path)
