"""Handcrafted guidance signals for pairwise fusion.

Three signals are computed per reference/non-reference pair:

- pseudo-HDR images: exposure-normalized gamma linearizations L**gamma / t,
  crude irradiance estimates that already agree with the scene wherever the
  frame is well exposed;
- the structure tensor of the reference frame, whose eigenvalues classify
  every pixel as flat, edge, or corner; the *reversed flat map* (1 - flat)
  is the texture prior handed to the network;
- a binary difference mask marking large photometric discrepancies between
  the pair after an equalize-blur-gray transform, flagging motion and
  saturation regions to suppress ghosting.

All spatial filtering in this module uses replicate ("nearest") boundary
handling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ihdr.images import DataError, HdrImage, LdrImage

DEFAULT_WINDOW = 3
DEFAULT_TAU = 1e-3
DEFAULT_THRESHOLD = 0.2
DEFAULT_BLUR_RADIUS = 7
DEFAULT_LEVELS = 3


def pseudo_hdr(image: LdrImage, gamma: float) -> HdrImage:
    """Per-pixel L**gamma / t: gamma-linearize and normalize by exposure."""
    if not gamma > 0:
        raise DataError(f"gamma must be positive, got {gamma!r}")
    return HdrImage(pixels=image.pixels**gamma / image.exposure_time)


@dataclass(frozen=True)
class StructureTensorResult:
    """Eigen-structure of the windowed gradient matrix at every pixel.

    ``edge_map + corner_map + flat_map == 1`` everywhere (the classification
    is exclusive), and ``reversed_flat = 1 - flat_map`` is the texture prior.
    """

    eigen_max: np.ndarray
    eigen_min: np.ndarray
    orientation: np.ndarray
    edge_map: np.ndarray
    corner_map: np.ndarray
    flat_map: np.ndarray
    reversed_flat: np.ndarray
    window: int
    tau: float


def _central_gradients(lum):
    """Central differences with replicate boundaries."""
    padded_x = np.pad(lum, ((0, 0), (1, 1)), mode="edge")
    padded_y = np.pad(lum, ((1, 1), (0, 0)), mode="edge")
    gx = (padded_x[:, 2:] - padded_x[:, :-2]) / 2.0
    gy = (padded_y[2:, :] - padded_y[:-2, :]) / 2.0
    return gx, gy


def structure_tensor(image: LdrImage, window: int = DEFAULT_WINDOW, tau: float = DEFAULT_TAU) -> StructureTensorResult:
    """Windowed gradient tensor of the luma channel with analytic 2x2 eigenvalues.

    The C = window**2 gradient samples around each pixel form a C x 2 matrix
    G; the eigenvalues of G^T G (sums of squared gradients over the window)
    classify the pixel: flat if the larger eigenvalue is below ``tau``, edge
    if only the smaller one is, corner otherwise.
    """
    if window < 3 or window % 2 == 0:
        raise DataError(f"window must be odd and >= 3, got {window}")
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau!r}")

    gx, gy = _central_gradients(image.luma())
    samples = float(window * window)
    sxx = ndimage.uniform_filter(gx * gx, size=window, mode="nearest") * samples
    sxy = ndimage.uniform_filter(gx * gy, size=window, mode="nearest") * samples
    syy = ndimage.uniform_filter(gy * gy, size=window, mode="nearest") * samples

    half_trace = (sxx + syy) / 2.0
    disc = np.sqrt(((sxx - syy) / 2.0) ** 2 + sxy**2)
    eigen_max = half_trace + disc
    eigen_min = np.maximum(half_trace - disc, 0.0)
    orientation = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)

    flat = (eigen_max < tau).astype(np.float64)
    edge = ((eigen_max >= tau) & (eigen_min < tau)).astype(np.float64)
    corner = ((eigen_max >= tau) & (eigen_min >= tau)).astype(np.float64)
    return StructureTensorResult(
        eigen_max=eigen_max,
        eigen_min=eigen_min,
        orientation=orientation,
        edge_map=edge,
        corner_map=corner,
        flat_map=flat,
        reversed_flat=1.0 - flat,
        window=window,
        tau=tau,
    )


def laplacian_edge_map(image: LdrImage, threshold: float = DEFAULT_TAU) -> np.ndarray:
    """Binary |Laplacian| > threshold map: ablation alternative to the
    reversed flat map, not a production path (it is markedly noisier)."""
    kernel = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    response = ndimage.correlate(image.luma(), kernel, mode="nearest")
    return (np.abs(response) > threshold).astype(np.float64)


@dataclass(frozen=True)
class DifferenceMask:
    """Binary map of large photometric discrepancy between a frame pair."""

    mask: np.ndarray
    threshold: float = DEFAULT_THRESHOLD
    blur_radius: int = DEFAULT_BLUR_RADIUS


def _equalize_channel(channel):
    """256-bin histogram equalization mapping each pixel to its CDF value."""
    bins = np.minimum((channel * 256.0).astype(np.int64), 255)
    hist = np.bincount(bins.ravel(), minlength=256)
    cdf = np.cumsum(hist) / channel.size
    return cdf[bins]


def gaussian_kernel(radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps of half-width ``radius``, sigma = radius/3."""
    sigma = radius / 3.0
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def _gaussian_blur(plane, radius):
    kernel = gaussian_kernel(radius)
    out = ndimage.correlate1d(plane, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def equalize_blur_gray(image: LdrImage, blur_radius: int = DEFAULT_BLUR_RADIUS) -> np.ndarray:
    """The comparison transform T = rgb2gray(Blur(HistEq(.))).

    Histogram equalization runs independently per RGB channel with 256 bins;
    the Gaussian blur has kernel half-width ``blur_radius`` and
    sigma = blur_radius / 3.
    """
    transformed = np.stack(
        [
            _gaussian_blur(_equalize_channel(image.pixels[:, :, c]), blur_radius)
            for c in range(3)
        ],
        axis=2,
    )
    return transformed @ np.array([0.299, 0.587, 0.114])


def difference_mask(
    ref: LdrImage,
    nonref: LdrImage,
    threshold: float = DEFAULT_THRESHOLD,
    blur_radius: int = DEFAULT_BLUR_RADIUS,
) -> DifferenceMask:
    """Mark pixels where the transformed lumas of the pair differ by more
    than ``threshold``."""
    if ref.pixels.shape != nonref.pixels.shape:
        raise DataError(
            f"difference_mask needs equal shapes, got {ref.pixels.shape} vs {nonref.pixels.shape}"
        )
    if not 0.0 < threshold < 1.0:
        raise DataError(f"threshold must be in (0, 1), got {threshold!r}")
    if blur_radius < 1:
        raise DataError(f"blur_radius must be >= 1, got {blur_radius}")
    t_ref = equalize_blur_gray(ref, blur_radius)
    t_nonref = equalize_blur_gray(nonref, blur_radius)
    mask = (np.abs(t_ref - t_nonref) > threshold).astype(np.float64)
    return DifferenceMask(mask=mask, threshold=threshold, blur_radius=blur_radius)


def max_pool_levels(plane: np.ndarray, levels: int) -> list:
    """Pyramid of 2x max-pooled copies; level 0 is the input itself."""
    if levels < 1:
        raise DataError(f"levels must be >= 1, got {levels}")
    h, w = plane.shape
    divisor = 2 ** (levels - 1)
    if h % divisor or w % divisor:
        raise DataError(f"dimensions {h}x{w} not divisible by 2^(levels-1) = {divisor}")
    pyramid = [plane]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        ph, pw = prev.shape
        pyramid.append(prev.reshape(ph // 2, 2, pw // 2, 2).max(axis=(1, 3)))
    return pyramid


def multiscale_st(st: StructureTensorResult, levels: int = DEFAULT_LEVELS) -> list:
    """Multi-level texture priors: max-pooled pyramid of the reversed flat map."""
    return max_pool_levels(st.reversed_flat, levels)


@dataclass(frozen=True)
class SideInfoBundle:
    """Everything one fusion step consumes for a reference/non-reference pair."""

    ref_ldr: LdrImage
    nonref_ldr: LdrImage
    ref_pseudo_hdr: HdrImage
    nonref_pseudo_hdr: HdrImage
    st: StructureTensorResult
    diff: DifferenceMask

    def __post_init__(self):
        shape = self.ref_ldr.pixels.shape[:2]
        others = {
            "nonref_ldr": self.nonref_ldr.pixels.shape[:2],
            "ref_pseudo_hdr": self.ref_pseudo_hdr.pixels.shape[:2],
            "nonref_pseudo_hdr": self.nonref_pseudo_hdr.pixels.shape[:2],
            "structure tensor": self.st.reversed_flat.shape,
            "difference mask": self.diff.mask.shape,
        }
        for name, other in others.items():
            if other != shape:
                raise DataError(f"bundle {name} is {other}, reference is {shape}")

    @property
    def shape(self):
        return self.ref_ldr.pixels.shape


def build_bundle(
    ref: LdrImage,
    nonref: LdrImage,
    gamma: float = 2.2,
    window: int = DEFAULT_WINDOW,
    tau: float = DEFAULT_TAU,
    threshold: float = DEFAULT_THRESHOLD,
    blur_radius: int = DEFAULT_BLUR_RADIUS,
) -> SideInfoBundle:
    """Assemble the full side-information bundle for one fusion step."""
    return SideInfoBundle(
        ref_ldr=ref,
        nonref_ldr=nonref,
        ref_pseudo_hdr=pseudo_hdr(ref, gamma),
        nonref_pseudo_hdr=pseudo_hdr(nonref, gamma),
        st=structure_tensor(ref, window=window, tau=tau),
        diff=difference_mask(ref, nonref, threshold=threshold, blur_radius=blur_radius),
    )
