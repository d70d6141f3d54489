#!/usr/bin/env python3
"""Simulate an exposure bracket from a synthetic HDR scene.

Builds a wide-dynamic-range test scene, exposes it through the full sensor
model (shot noise, full-well clipping, read noise, ADC), and writes the
frames plus a manifest that the other demos and the CLI can consume.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy import ndimage

from ihdr.images import HdrImage, write_bracket, write_pfm
from ihdr.sensor import SensorParams, make_bracket

out_dir = Path("demo_out/01_simulate")
out_dir.mkdir(parents=True, exist_ok=True)

# A smooth scene spanning ~2.5 orders of magnitude of irradiance, in
# photons/s so the Poisson statistics are meaningful.
rng = np.random.default_rng(0)
gray = ndimage.gaussian_filter(rng.uniform(size=(192, 256)), 10.0)
gray = (gray - gray.min()) / (gray.max() - gray.min())
tint = np.array([1.05, 1.0, 0.9])
scene = (30.0 * 300.0**gray)[:, :, None] * tint
hdr = HdrImage(pixels=scene)
write_pfm(hdr, out_dir / "scene.pfm")
print(f"scene irradiance range: [{scene.min():.1f}, {scene.max():.1f}] photons/s")

# Expose at EV -4 .. +4. The base exposure is chosen so the EV 0 frame is
# mid-toned; high EVs saturate the bright region, low EVs go dark and noisy.
params = SensorParams()
bracket = make_bracket(hdr, range(-4, 5), params, seed=7, t0=0.25, mode="poisson")
manifest = write_bracket(bracket, out_dir / "bracket")
print(f"wrote {len(bracket)} frames -> {manifest}")

fig, axes = plt.subplots(1, len(bracket), figsize=(3 * len(bracket), 3))
for ax, frame in zip(axes, bracket.frames):
    ax.imshow(frame.pixels)
    ax.set_title(f"EV {frame.ev:+.0f}\nt = {frame.exposure_time:.3f}s")
    ax.axis("off")
fig.tight_layout()
fig.savefig(out_dir / "bracket_montage.png", dpi=90)
print(f"montage -> {out_dir / 'bracket_montage.png'}")
