"""Quality metrics in the linear and tonemapped (mu-law) domains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ihdr.images import DataError, HdrImage, LUMA_WEIGHTS
from ihdr.tonemap import mu_law

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricsReport:
    """PSNR/SSIM in both evaluation domains; PSNR is +inf for identical images."""

    psnr_l: float
    psnr_mu: float
    ssim_l: float
    ssim_mu: float

    def to_json(self) -> dict:
        def enc(x):
            return "inf" if math.isinf(x) else x

        return {
            "psnr_l": enc(self.psnr_l),
            "psnr_mu": enc(self.psnr_mu),
            "ssim_l": self.ssim_l,
            "ssim_mu": self.ssim_mu,
        }


def _pixels(image):
    return image.pixels if isinstance(image, HdrImage) else np.asarray(image, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical inputs return +inf."""
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise DataError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    if not peak > 0:
        raise DataError(f"peak must be positive, got {peak!r}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _ssim_kernel():
    xs = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    k = np.exp(-(xs**2) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


def _local_mean(plane):
    k = _ssim_kernel()
    out = ndimage.correlate1d(plane, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _to_luma(arr):
    return arr @ LUMA_WEIGHTS if arr.ndim == 3 else arr


def ssim(a, b) -> float:
    """Mean local SSIM of the luma channels, 11x11 Gaussian window, sigma 1.5.

    Values are assumed to lie in [0, 1] (data range 1).
    """
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise DataError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    x = _to_luma(a)
    y = _to_luma(b)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    mu_x = _local_mean(x)
    mu_y = _local_mean(y)
    sigma_x = _local_mean(x * x) - mu_x * mu_x
    sigma_y = _local_mean(y * y) - mu_y * mu_y
    sigma_xy = _local_mean(x * y) - mu_x * mu_y

    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    return float(np.mean(numerator / denominator))


def evaluate(h_hat: HdrImage, h_gt: HdrImage, mu: float = 5000.0) -> MetricsReport:
    """Linear- and mu-domain metrics after normalizing both by max(h_gt)."""
    pred, gt = _pixels(h_hat), _pixels(h_gt)
    if pred.shape != gt.shape:
        raise DataError(f"evaluate shape mismatch: {pred.shape} vs {gt.shape}")
    peak = float(gt.max())
    if not peak > 0:
        raise DataError("ground truth must contain positive values")
    pred = pred / peak
    gt = gt / peak
    pred_mu = mu_law(pred, mu)
    gt_mu = mu_law(gt, mu)
    return MetricsReport(
        psnr_l=psnr(pred, gt, peak=1.0),
        psnr_mu=psnr(pred_mu, gt_mu, peak=1.0),
        ssim_l=ssim(pred, gt),
        ssim_mu=ssim(pred_mu, gt_mu),
    )
