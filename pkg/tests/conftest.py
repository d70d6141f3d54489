"""Shared synthetic fixtures for the test suite."""

import numpy as np
import pytest
from scipy import ndimage

from ihdr.images import HdrImage, LdrImage


def smooth_hdr(size=32, seed=0, lo=0.02, hi=0.14):
    """A smooth synthetic irradiance map in [lo, hi]: blurred noise + ramp."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(size=(size, size, 3))
    base = np.stack([ndimage.gaussian_filter(base[:, :, c], size / 16.0) for c in range(3)], axis=2)
    base = (base - base.min()) / (base.max() - base.min())
    yy, xx = np.mgrid[0:size, 0:size] / size
    ramp = ((xx + yy) / 2.0)[:, :, None]
    scene = lo + (hi - lo) * (0.7 * base + 0.3 * ramp)
    return HdrImage(pixels=scene)


def textured_ldr(size=32, seed=0, lo=0.2, hi=0.8, exposure_time=1.0, ev=0.0):
    """A noisy mid-range LDR frame for mask and statistics tests."""
    rng = np.random.default_rng(seed)
    return LdrImage(
        pixels=rng.uniform(lo, hi, size=(size, size, 3)),
        exposure_time=exposure_time,
        ev=ev,
    )


def constant_ldr(value, size=16, exposure_time=1.0, ev=0.0):
    return LdrImage(
        pixels=np.full((size, size, 3), float(value)),
        exposure_time=exposure_time,
        ev=ev,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
