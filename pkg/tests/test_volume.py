import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxelclean.volume import (
    aggregate_patches,
    build_patch_grid,
    default_eps,
    denormalize,
    extract_patches,
    local_moments,
    normalize,
    MomentMaps,
)


def brute_moments(vol, window):
    lo = -(window // 2)
    hi = lo + window - 1
    mean = np.zeros(vol.shape)
    std = np.zeros(vol.shape)
    for idx in itertools.product(*[range(n) for n in vol.shape]):
        sl = tuple(slice(max(i + lo, 0), min(i + hi, n - 1) + 1) for i, n in zip(idx, vol.shape))
        block = vol[sl]
        mean[idx] = block.mean()
        std[idx] = block.std()
    return mean, std


def test_constant_volume_moments():
    maps = local_moments(np.full((10, 9, 8), 7.0), 6)
    assert np.all(maps.mean_map == 7.0)
    assert np.all(maps.std_map == 0.0)


def test_impulse_mean():
    vol = np.zeros((7, 7, 7))
    vol[3, 3, 3] = 1.0
    maps = local_moments(vol, 3)
    assert maps.mean_map[3, 3, 3] == pytest.approx(1 / 27, rel=1e-12)


def test_ramp_interior():
    x = np.arange(9.0)
    vol = np.broadcast_to(x[:, None, None], (9, 5, 5)).copy()
    maps = local_moments(vol, 3)
    assert maps.mean_map[4, 2, 2] == pytest.approx(4.0, rel=1e-12)
    assert maps.std_map[4, 2, 2] == pytest.approx(np.sqrt(2 / 3), rel=1e-12)


@pytest.mark.parametrize("window", [2, 3, 6])
def test_moments_match_brute_force(window):
    vol = np.random.default_rng(window).normal(3.0, 2.0, (7, 6, 8))
    mean, std = brute_moments(vol, window)
    maps = local_moments(vol, window)
    np.testing.assert_allclose(maps.mean_map, mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(maps.std_map, std, rtol=1e-10, atol=1e-12)


def test_even_window_offsets():
    # window 6 at voxel 3 covers x in [0, 5]; at voxel 0 it is truncated to [0, 2]
    vol = np.zeros((12, 1, 1))
    vol[:, 0, 0] = np.arange(12.0)
    mean = local_moments(vol, 6).mean_map[:, 0, 0]
    assert mean[3] == pytest.approx(np.mean(np.arange(0, 6)))
    assert mean[0] == pytest.approx(np.mean(np.arange(0, 3)))
    assert mean[11] == pytest.approx(np.mean(np.arange(8, 12)))


def test_window_larger_than_volume():
    with pytest.raises(ValueError):
        local_moments(np.zeros((4, 4, 4)), 5)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-2), b=st.floats(-100, 100), seed=st.integers(0, 1000))
def test_affine_response(a, b, seed):
    vol = np.random.default_rng(seed).random((6, 5, 7))
    base = local_moments(vol, 3)
    moved = local_moments(a * vol + b, 3)
    np.testing.assert_allclose(moved.mean_map, a * base.mean_map + b, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(moved.std_map, abs(a) * base.std_map, rtol=1e-7, atol=1e-9)


def test_normalize_examples():
    maps = MomentMaps(np.full((1, 1, 1), 4.0), np.full((1, 1, 1), 3.0), 6)
    assert normalize(np.full((1, 1, 1), 10.0), maps, 1e-5)[0, 0, 0] == 2.0
    assert denormalize(np.full((1, 1, 1), 2.0), maps, 1e-5)[0, 0, 0] == 10.0
    flat = MomentMaps(np.full((1, 1, 1), 5.0), np.zeros((1, 1, 1)), 6)
    assert normalize(np.full((1, 1, 1), 5.0), flat, 1e-5)[0, 0, 0] == 0.0


def test_normalize_constant_is_zero():
    vol = np.full((8, 8, 8), 3.5)
    maps = local_moments(vol, 6)
    assert np.all(normalize(vol, maps, default_eps(vol)) == 0.0)


def test_denormalize_zero_gives_mean():
    vol = np.random.default_rng(0).random((8, 8, 8))
    maps = local_moments(vol, 6)
    np.testing.assert_array_equal(denormalize(np.zeros_like(vol), maps, 1e-5), maps.mean_map)


def test_normalize_round_trip():
    vol = np.random.default_rng(1).normal(100, 20, (10, 11, 12))
    maps = local_moments(vol, 6)
    eps = default_eps(vol)
    assert maps.std_map.min() > eps
    back = denormalize(normalize(vol, maps, eps), maps, eps)
    assert np.max(np.abs(back - vol)) < 1e-9


def test_normalize_dim_mismatch():
    maps = local_moments(np.ones((6, 6, 6)), 3)
    with pytest.raises(ValueError):
        normalize(np.ones((6, 6, 5)), maps, 1e-5)


def test_default_eps_floor():
    assert default_eps(np.zeros((3, 3, 3))) == 1e-12
    assert default_eps(np.array([0.0, 2.0]).reshape(2, 1, 1)) == pytest.approx(1e-5)


@pytest.mark.parametrize("dim, stride, expected", [
    (24, 12, [0, 12]),
    (13, 12, [0, 1]),
    (24, 6, [0, 6, 12]),
    (20, 3, [0, 3, 6, 8]),
])
def test_grid_axis_origins(dim, stride, expected):
    grid = build_patch_grid((dim, 12, 12), 12, stride)
    assert list(grid.axis_origins[0]) == expected


def brute_counts(grid):
    counts = np.zeros(grid.dims, dtype=int)
    p = grid.patch_size
    for x, y, z in grid.origins:
        counts[x:x + p, y:y + p, z:z + p] += 1
    return counts


def test_overlap_counts_stride6():
    grid = build_patch_grid((24, 24, 24), 12, 6)
    counts = brute_counts(grid)
    np.testing.assert_array_equal(grid.overlap_counts(), counts)
    assert counts[8, 8, 8] == 8


def test_overlap_counts_stride3():
    grid = build_patch_grid((24, 24, 24), 12, 3)
    assert grid.overlap_counts()[12, 12, 12] == 64
    np.testing.assert_array_equal(grid.overlap_counts(), brute_counts(grid))


def test_grid_rejects_small_volume():
    with pytest.raises(ValueError):
        build_patch_grid((11, 20, 20), 12, 3)


@settings(max_examples=40, deadline=None)
@given(dims=st.tuples(*[st.integers(12, 30)] * 3), stride=st.integers(1, 12))
def test_grid_covers_every_voxel(dims, stride):
    grid = build_patch_grid(dims, 12, stride)
    origins = grid.origins
    assert np.all(origins >= 0)
    assert np.all(origins + 12 <= np.array(dims))
    assert grid.overlap_counts().min() >= 1


def test_aggregate_disjoint_is_identity():
    vol = np.random.default_rng(2).random((24, 24, 24))
    grid = build_patch_grid(vol.shape, 12, 12)
    np.testing.assert_array_equal(aggregate_patches(extract_patches(vol, grid), grid), vol)


def test_aggregate_overlapping_identity():
    vol = np.random.default_rng(3).random((20, 17, 24))
    grid = build_patch_grid(vol.shape, 12, 3)
    np.testing.assert_allclose(aggregate_patches(extract_patches(vol, grid), grid), vol, rtol=1e-13)


def test_aggregate_two_full_overlaps():
    # dims 12 with stride 3 gives a single origin; build two patches by hand on a 13-wide axis
    grid = build_patch_grid((13, 12, 12), 12, 12)
    patches = np.stack([np.full((12, 12, 12), 1.0), np.full((12, 12, 12), 3.0)])
    out = aggregate_patches(patches, grid)
    assert out[5, 5, 5] == 2.0
    assert out[0, 0, 0] == 1.0
    assert out[12, 0, 0] == 3.0


def test_aggregate_linear():
    rng = np.random.default_rng(4)
    grid = build_patch_grid((18, 15, 14), 12, 3)
    p = rng.random((len(grid), 12, 12, 12))
    q = rng.random((len(grid), 12, 12, 12))
    lhs = aggregate_patches(2.5 * p - 1.5 * q, grid)
    rhs = 2.5 * aggregate_patches(p, grid) - 1.5 * aggregate_patches(q, grid)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_aggregate_count_mismatch():
    grid = build_patch_grid((24, 24, 24), 12, 12)
    with pytest.raises(ValueError):
        aggregate_patches(np.zeros((3, 12, 12, 12)), grid)
