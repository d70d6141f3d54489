"""Classical weight-free fuser, so the pipeline runs without any training.

Blends the two pseudo-HDR estimates with Gaussian well-exposedness weights
computed on the LDR lumas, and falls back to the reference estimate alone
wherever the difference mask flags motion or saturation.
"""

from __future__ import annotations

import numpy as np

from ihdr.images import HdrImage
from ihdr.sideinfo import SideInfoBundle

EXPOSEDNESS_SIGMA = 0.2


def well_exposedness(luma: np.ndarray) -> np.ndarray:
    """Gaussian preference for mid-tones: exp(-(L - 0.5)^2 / (2 * 0.2^2))."""
    return np.exp(-((luma - 0.5) ** 2) / (2.0 * EXPOSEDNESS_SIGMA**2))


def baseline_fuse(bundle: SideInfoBundle) -> HdrImage:
    """Well-exposedness blend of the pseudo-HDR pair, gated by the mask."""
    w_ref = well_exposedness(bundle.ref_ldr.luma())[:, :, None]
    w_nonref = well_exposedness(bundle.nonref_ldr.luma())[:, :, None]
    blend = (w_ref * bundle.ref_pseudo_hdr.pixels + w_nonref * bundle.nonref_pseudo_hdr.pixels) / (
        w_ref + w_nonref
    )
    gate = bundle.diff.mask[:, :, None]
    fused = gate * bundle.ref_pseudo_hdr.pixels + (1.0 - gate) * blend
    return HdrImage(pixels=np.maximum(fused, 0.0))
