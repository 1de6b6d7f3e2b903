import numpy as np
import pytest

from voxelclean.noisegen import (
    NoiseField,
    PhantomSpec,
    add_gaussian,
    add_rician,
    foreground_mask,
    make_modulation_field,
    make_phantom,
    sigma_for_level,
    stationary_field,
)

BIG = (128, 128, 64)  # > 10^6 voxels


def test_phantom_deterministic():
    spec = PhantomSpec(dims=(32, 32, 32), seed=3)
    np.testing.assert_array_equal(make_phantom(spec), make_phantom(spec))


def test_phantom_peak_and_foreground():
    vol = make_phantom()
    assert vol.max() == 255.0
    frac = foreground_mask(vol, 10).mean()
    assert 0.2 <= frac <= 0.9


def test_phantom_has_several_classes():
    vol = make_phantom(PhantomSpec(dims=(48, 48, 48), seed=1))
    hist, _ = np.histogram(vol[vol > 10], bins=25, range=(10, 255))
    # at least three well-populated intensity modes
    peaks = [i for i in range(1, 24) if hist[i] >= hist[i - 1] and hist[i] >= hist[i + 1] and hist[i] > 500]
    assert len(peaks) >= 3


def test_phantom_seeds_differ():
    a = make_phantom(PhantomSpec(dims=(32, 32, 32), seed=0))
    b = make_phantom(PhantomSpec(dims=(32, 32, 32), seed=1))
    assert not np.array_equal(a, b)


def test_phantom_too_small():
    with pytest.raises(ValueError):
        make_phantom(PhantomSpec(dims=(15, 32, 32)))


def test_level_semantics():
    assert sigma_for_level(1) == pytest.approx(2.55)
    assert sigma_for_level(9) == pytest.approx(22.95)


def test_modulation_ramp_values():
    field = make_modulation_field((2, 3, 5), 1.0, 3.0)
    np.testing.assert_allclose(field[0, 0, :], [1.0, 1.5, 2.0, 2.5, 3.0])
    assert np.all(field[:, :, 2] == 2.0)


@pytest.mark.parametrize("profile", ["ramp", "radial"])
def test_modulation_endpoints(profile):
    field = make_modulation_field((9, 10, 11), 1.0, 3.0, profile=profile)
    assert field.min() == 1.0
    assert field.max() == 3.0


def test_modulation_constant():
    assert np.all(make_modulation_field((4, 4, 4), 1.0, 1.0) == 1.0)


def test_modulation_rejects_nonpositive():
    with pytest.raises(ValueError):
        make_modulation_field((4, 4, 4), 0.0, 3.0)


def test_noise_field_validation():
    with pytest.raises(ValueError):
        NoiseField(np.full((2, 2, 2), -1.0))
    with pytest.raises(ValueError):
        NoiseField(np.ones((2, 2, 2)), kind="poisson")


def test_zero_sigma_is_identity():
    vol = make_phantom(PhantomSpec(dims=(16, 16, 16)))
    zero = NoiseField(np.zeros(vol.shape))
    np.testing.assert_array_equal(add_gaussian(vol, zero, 1), vol)
    np.testing.assert_array_equal(add_rician(vol, zero, 1), vol)


def test_noise_deterministic_and_input_untouched():
    vol = np.full((8, 8, 8), 50.0)
    before = vol.copy()
    a = add_rician(vol, 5.0, seed=11)
    b = add_rician(vol, 5.0, seed=11)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(vol, before)
    assert not np.array_equal(a, add_rician(vol, 5.0, seed=12))


def test_gaussian_statistics():
    vol = np.zeros(BIG)
    sigma = 22.95
    noise = add_gaussian(vol, stationary_field(BIG, 9), seed=0) - vol
    n = noise.size
    assert abs(noise.std() - sigma) < 0.01 * sigma
    assert abs(noise.mean()) < 3 * sigma / np.sqrt(n)


def test_rayleigh_mean():
    sigma = 10.0
    out = add_rician(np.zeros(BIG), sigma, seed=1)
    assert out.mean() == pytest.approx(sigma * np.sqrt(np.pi / 2), rel=0.01)
    assert out.mean() > 0


def test_rician_high_snr_mean():
    sigma, a = 5.0, 50.0
    out = add_rician(np.full(BIG, a), sigma, seed=2)
    assert out.mean() == pytest.approx(np.sqrt(a * a + sigma * sigma), rel=0.005)


def test_rician_rejects_negative():
    with pytest.raises(ValueError):
        add_rician(np.full((4, 4, 4), -1.0), 1.0, seed=0)


def test_dim_mismatch():
    with pytest.raises(ValueError):
        add_gaussian(np.zeros((4, 4, 4)), NoiseField(np.ones((4, 4, 5))), 0)


def test_spatially_varying_slabs():
    dims = (128, 128, 16)
    base = sigma_for_level(5)
    mod = make_modulation_field(dims, 1.0, 3.0)
    field = NoiseField(base * mod)
    noise = add_gaussian(np.zeros(dims), field, seed=3)
    for k in (0, 7, 15):
        slab_sigma = base * mod[0, 0, k]
        assert noise[:, :, k].std() == pytest.approx(slab_sigma, rel=0.02)
