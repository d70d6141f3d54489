"""Physical imaging model and synthetic exposure-bracket generation.

The full stochastic model turns scene irradiance into an LDR frame through
photon shot noise, full-well clipping, conversion gain, read noise, gamma
companding, and ADC quantization:

    e ~ Poisson(t * QE * (H + mu_dark));  e <- Clip(e, 0, full_well)
    v = gain * e + Normal(0, sigma_read^2)
    L = quantize(max(v, 0) ** (1 / gamma))

The simplified deterministic form collapses gain, exposure, and quantum
efficiency into one exposure-related scalar c:

    L = clamp((c * H) ** (1 / gamma), 0, 1)

The simplified mapping is shared with the tonemapping stage; its inverse
(H = L**gamma / c) is what makes iterative reuse of fused results exact on
the unclipped range.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ihdr.images import Bracket, DataError, HdrImage, LdrImage


@dataclass(frozen=True)
class SensorParams:
    """Physical camera constants.

    ``conversion_gain`` maps electrons to normalized signal; its default is
    1/full_well so a full well lands exactly at 1.0 before companding.
    ``read_noise`` is the post-gain standard deviation.  ``c`` is the
    exposure-related scalar of the simplified model.
    """

    conversion_gain: float = 1e-4
    quantum_efficiency: float = 0.9
    dark_current: float = 0.0
    read_noise: float = 2e-4
    full_well: float = 10_000.0
    adc_bits: int = 12
    gamma: float = 2.2
    c: float = 4.5

    def __post_init__(self):
        if not self.conversion_gain > 0:
            raise DataError("conversion_gain must be positive")
        if not 0 < self.quantum_efficiency <= 1:
            raise DataError("quantum_efficiency must be in (0, 1]")
        if self.dark_current < 0 or self.read_noise < 0:
            raise DataError("dark_current and read_noise must be non-negative")
        if not self.full_well > 0:
            raise DataError("full_well must be positive")
        if not 8 <= self.adc_bits <= 16:
            raise DataError("adc_bits must be in [8, 16]")
        if not self.gamma > 0 or not self.c > 0:
            raise DataError("gamma and c must be positive")


def _quantize(values, bits):
    """Uniform ADC: codes = round(v * (2^bits - 1)), saturating at full scale."""
    levels = float(2**bits - 1)
    codes = np.floor(np.clip(values, 0.0, 1.0) * levels + 0.5)
    return codes / levels


def simulate_ldr(
    hdr: HdrImage, t: float, params: SensorParams, seed: int = 0, deterministic: bool = False
) -> LdrImage:
    """Expose an irradiance map for ``t`` seconds through the full model.

    With ``deterministic=True`` the Poisson and Gaussian draws are replaced
    by their means, leaving clipping, companding, and quantization in place.
    The stochastic path is reproducible: same seed, bit-identical output.
    """
    if not t > 0:
        raise DataError(f"exposure time must be positive, got {t!r}")
    lam = t * params.quantum_efficiency * (hdr.pixels + params.dark_current)
    if deterministic:
        electrons = lam
        noise = 0.0
    else:
        rng = np.random.default_rng(seed)
        electrons = rng.poisson(lam).astype(np.float64)
        noise = rng.normal(0.0, params.read_noise, size=lam.shape) if params.read_noise > 0 else 0.0
    electrons = np.clip(electrons, 0.0, params.full_well)
    v = np.maximum(params.conversion_gain * electrons + noise, 0.0)
    ldr = _quantize(v ** (1.0 / params.gamma), params.adc_bits)
    return LdrImage(pixels=ldr, exposure_time=t)


def simulate_ldr_simplified(hdr: HdrImage, params: SensorParams) -> LdrImage:
    """Deterministic simplified exposure: L = clamp((c*H)^(1/gamma), 0, 1).

    The returned frame carries ``exposure_time = c`` so that the pseudo-HDR
    reconstruction L^gamma / t inverts this mapping exactly on the unclipped
    range.
    """
    ldr = np.clip((params.c * hdr.pixels) ** (1.0 / params.gamma), 0.0, 1.0)
    return LdrImage(pixels=ldr, exposure_time=params.c)


def invert_simplified(ldr: LdrImage, params: SensorParams) -> HdrImage:
    """Right-inverse of the simplified exposure on the unclipped range."""
    return HdrImage(pixels=ldr.pixels**params.gamma / params.c)


@dataclass(frozen=True)
class MotionSpec:
    """Foreground layer translation for synthetic ghosting content.

    The box ``(y0, y1, x0, x1)`` is cut from the scene and pasted displaced
    by ``(i * dy, i * dx)`` in frame ``i``; vacated pixels keep the
    background (original scene) values.
    """

    y0: int
    y1: int
    x0: int
    x1: int
    dx: int = 0
    dy: int = 0


def _apply_motion(hdr: HdrImage, motion: MotionSpec, frame_index: int) -> HdrImage:
    dy, dx = motion.dy * frame_index, motion.dx * frame_index
    if dy == 0 and dx == 0:
        return hdr
    pixels = hdr.pixels.copy()
    patch = hdr.pixels[motion.y0 : motion.y1, motion.x0 : motion.x1]
    h, w = pixels.shape[:2]
    y0, x0 = motion.y0 + dy, motion.x0 + dx
    y1, x1 = y0 + patch.shape[0], x0 + patch.shape[1]
    cy0, cx0 = max(y0, 0), max(x0, 0)
    cy1, cx1 = min(y1, h), min(x1, w)
    if cy1 > cy0 and cx1 > cx0:
        pixels[cy0:cy1, cx0:cx1] = patch[cy0 - y0 : cy1 - y0, cx0 - x0 : cx1 - x0]
    return HdrImage(pixels=pixels)


def make_bracket(
    hdr: HdrImage,
    evs,
    params: SensorParams,
    seed: int = 0,
    t0: float = 1.0,
    mode: str = "poisson",
    motion: MotionSpec | None = None,
) -> Bracket:
    """Simulate an exposure bracket; frame i is exposed for t0 * 2**ev_i.

    Modes:
      - ``"poisson"``       full stochastic model (per-frame derived seeds)
      - ``"deterministic"`` full model with noise replaced by its mean
      - ``"simplified"``    L = clamp((c * 2**ev * H)^(1/gamma), 0, 1) with
        exposure_time = c * 2**ev: the noiseless, quantization-free path
        whose pseudo-HDR inversion is exact

    EV order is preserved as given.
    """
    evs = list(evs)
    if not evs:
        raise DataError("make_bracket requires a non-empty EV list")
    if not t0 > 0:
        raise DataError("base exposure t0 must be positive")
    if mode not in ("poisson", "deterministic", "simplified"):
        raise DataError(f"unknown simulation mode {mode!r}")

    frames = []
    for i, ev in enumerate(evs):
        scene = _apply_motion(hdr, motion, i) if motion is not None else hdr
        if mode == "simplified":
            scaled = replace(params, c=params.c * 2.0**ev)
            frame = simulate_ldr_simplified(scene, scaled)
        else:
            frame = simulate_ldr(
                scene,
                t=t0 * 2.0**ev,
                params=params,
                seed=seed + 7919 * i,
                deterministic=(mode == "deterministic"),
            )
        frames.append(LdrImage(pixels=frame.pixels, exposure_time=frame.exposure_time, ev=float(ev)))

    if len(frames) == 1:
        # A single frame is a degenerate bracket; hand it back without the
        # K >= 2 container so callers can still inspect it.
        return frames[0]
    return Bracket(frames=tuple(frames))
