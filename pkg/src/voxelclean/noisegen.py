"""Synthetic phantoms and seeded Gaussian / Rician noise.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64, 128-bit
state); normal deviates use numpy's ziggurat sampler.  Outputs are
bit-reproducible for a given seed on one build.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "PEAK",
    "NoiseField",
    "PhantomSpec",
    "sigma_for_level",
    "make_phantom",
    "foreground_mask",
    "make_modulation_field",
    "stationary_field",
    "add_gaussian",
    "add_rician",
]

PEAK = 255.0


def sigma_for_level(percent: float, peak: float = PEAK) -> float:
    """Noise standard deviation for a level given in percent of ``peak``."""
    return percent / 100.0 * peak


@dataclass(frozen=True)
class NoiseField:
    sigma: np.ndarray
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("gaussian", "rician"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("noise sigma must be finite and non-negative")
        object.__setattr__(self, "sigma", sigma)


def stationary_field(dims: Sequence[int], percent: float, kind: str = "gaussian",
                     peak: float = PEAK) -> NoiseField:
    return NoiseField(np.full(tuple(dims), sigma_for_level(percent, peak)), kind)


# (label, intensity on a 0..1 scale); rescaled so the blurred maximum is 255
DEFAULT_CLASSES = (
    ("scalp", 0.55),
    ("skull", 0.12),
    ("csf", 0.28),
    ("grey", 0.62),
    ("white", 0.95),
    ("ventricle", 0.22),
)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    seed: int = 0
    classes: tuple = field(default=DEFAULT_CLASSES)
    blur: float = 0.7
    n_lesions: int = 6


def _ellipsoid(coords, centre, radii) -> np.ndarray:
    x, y, z = coords
    return (((x - centre[0]) / radii[0]) ** 2 + ((y - centre[1]) / radii[1]) ** 2
            + ((z - centre[2]) / radii[2]) ** 2)


def make_phantom(spec: PhantomSpec = PhantomSpec()) -> np.ndarray:
    """Head-like piecewise-smooth phantom with peak intensity exactly 255.

    Nested ellipsoids (scalp, skull, CSF, cortex, white matter, ventricles)
    with a seed-dependent folded cortex boundary and a few small blobs.
    """
    dims = tuple(int(d) for d in spec.dims)
    if len(dims) != 3 or min(dims) < 16:
        raise ValueError(f"phantom dims must be three values >= 16, got {dims}")
    rng = np.random.default_rng(spec.seed)
    levels = dict(spec.classes)

    coords = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")
    centre = np.array(dims, dtype=np.float64) / 2.0 + rng.uniform(-1.5, 1.5, 3)
    radii = np.array(dims, dtype=np.float64) * rng.uniform(0.40, 0.45, 3)
    x, y, z = ((c - centre[i]) / radii[i] for i, c in enumerate(coords))
    r = np.sqrt(x * x + y * y + z * z)
    theta = np.arctan2(y, x)
    phi = np.arccos(np.clip(z / np.maximum(r, 1e-9), -1.0, 1.0))

    # cortical folding: angular ripple of the grey/white boundary
    k1, k2 = rng.integers(5, 9, size=2)
    p1, p2 = rng.uniform(0, 2 * np.pi, 2)
    fold = 0.06 * np.sin(k1 * theta + p1) * np.sin(k2 * phi + p2)

    vol = np.zeros(dims, dtype=np.float64)
    vol[r < 1.0] = levels["scalp"]
    vol[r < 0.92] = levels["skull"]
    vol[r < 0.86] = levels["csf"]
    vol[r < 0.80] = levels["grey"]
    vol[r < 0.66 + fold] = levels["white"]

    vent = _ellipsoid(coords, centre + rng.uniform(-1, 1, 3),
                      radii * np.array([0.12, 0.30, 0.14]))
    vol[vent < 1.0] = levels["ventricle"]

    for _ in range(spec.n_lesions):
        c = centre + rng.uniform(-0.5, 0.5, 3) * radii
        rad = rng.uniform(1.2, 3.0, 3)
        inside = (_ellipsoid(coords, c, rad) < 1.0) & (r < 0.8)
        vol[inside] = rng.uniform(levels["csf"], levels["grey"])

    # mild smooth bias so classes are not perfectly flat
    bias = 1.0 + 0.05 * np.sin(2 * np.pi * coords[0] / dims[0] + rng.uniform(0, 2 * np.pi))
    vol *= bias
    if spec.blur > 0:
        vol = ndimage.gaussian_filter(vol, spec.blur, mode="constant")
    vol = vol / vol.max() * PEAK
    return vol


def foreground_mask(vol: np.ndarray, threshold: float = 10.0) -> np.ndarray:
    return np.asarray(vol) > threshold


def make_modulation_field(dims: Sequence[int], lo: float = 1.0, hi: float = 3.0,
                          profile: str = "ramp", axis: int = 2) -> np.ndarray:
    """Smooth multiplicative noise modulation with min ``lo`` and max ``hi``.

    ``profile="ramp"`` varies linearly along ``axis``; ``profile="radial"``
    grows with distance from the volume centre.
    """
    dims = tuple(int(d) for d in dims)
    if lo <= 0:
        raise ValueError(f"modulation lower bound must be positive, got {lo}")
    if hi < lo:
        raise ValueError(f"modulation upper bound {hi} below lower bound {lo}")
    if lo == hi:
        return np.full(dims, float(lo))

    if profile == "ramp":
        n = dims[axis]
        if n < 2:
            raise ValueError("ramp axis needs at least 2 voxels")
        t = np.arange(n, dtype=np.float64) / (n - 1)
        shape = [1, 1, 1]
        shape[axis] = n
        t = np.broadcast_to(t.reshape(shape), dims)
    elif profile == "radial":
        coords = np.meshgrid(*[np.arange(n) - (n - 1) / 2.0 for n in dims], indexing="ij")
        r = np.sqrt(sum(c * c for c in coords))
        t = (r - r.min()) / (r.max() - r.min())
    else:
        raise ValueError(f"unknown modulation profile {profile!r}")
    return lo + (hi - lo) * np.array(t, dtype=np.float64)


def _sigma_array(field, shape) -> np.ndarray:
    sigma = field.sigma if isinstance(field, NoiseField) else np.asarray(field, dtype=np.float64)
    if sigma.ndim == 0:
        sigma = np.full(shape, float(sigma))
    if sigma.shape != shape:
        raise ValueError(f"noise field dims {sigma.shape} do not match volume dims {shape}")
    if np.any(sigma < 0):
        raise ValueError("noise sigma must be non-negative")
    return sigma


def add_gaussian(vol: np.ndarray, field, seed: int) -> np.ndarray:
    """``vol + n`` with ``n ~ Normal(0, sigma(i))`` per voxel."""
    vol = np.asarray(vol, dtype=np.float64)
    sigma = _sigma_array(field, vol.shape)
    rng = np.random.default_rng(seed)
    return vol + sigma * rng.standard_normal(vol.shape)


def add_rician(vol: np.ndarray, field, seed: int) -> np.ndarray:
    """Magnitude of the signal with independent Gaussian noise on real and imaginary parts."""
    vol = np.asarray(vol, dtype=np.float64)
    if np.any(vol < 0):
        raise ValueError("Rician noise needs a non-negative magnitude image")
    sigma = _sigma_array(field, vol.shape)
    rng = np.random.default_rng(seed)
    real = vol + sigma * rng.standard_normal(vol.shape)
    imag = sigma * rng.standard_normal(vol.shape)
    return np.hypot(real, imag)
