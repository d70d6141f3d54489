"""iHDR: iterative pairwise fusion of exposure brackets into a single HDR image.

The package is organized around the stages of the pipeline:

- :mod:`ihdr.images`    image containers, bracket manifests, PFM/PNG I/O
- :mod:`ihdr.sensor`    physical imaging model and synthetic bracket generation
- :mod:`ihdr.sideinfo`  pseudo-HDR, structure tensor, and difference-mask guidance
- :mod:`ihdr.tonemap`   mu-law and physics-based linear-to-nonlinear mapping
- :mod:`ihdr.fusion`    the dual-input fusion network, training, and a classical
  weight-free baseline fuser
- :mod:`ihdr.pipeline`  reference selection, frame ordering, and the iterative
  fuse/map loop for an arbitrary number of frames
- :mod:`ihdr.metrics`   PSNR/SSIM in linear and tonemapped domains
- :mod:`ihdr.cli`       the ``ihdr`` command-line front end
"""

__version__ = "0.1.0"

from ihdr.images import Bracket, HdrImage, LdrImage, load_bracket, read_pfm, write_pfm
from ihdr.sensor import SensorParams, make_bracket, simulate_ldr, simulate_ldr_simplified
from ihdr.sideinfo import SideInfoBundle, build_bundle, difference_mask, pseudo_hdr, structure_tensor
from ihdr.tonemap import ToneNetModel, mu_law, physics_tonemap, tonenet_apply
from ihdr.metrics import MetricsReport, evaluate, psnr, ssim
from ihdr.pipeline import FusionPlan, iterative_fuse, plan, select_reference

__all__ = [
    "Bracket",
    "FusionPlan",
    "HdrImage",
    "LdrImage",
    "MetricsReport",
    "SensorParams",
    "SideInfoBundle",
    "ToneNetModel",
    "build_bundle",
    "difference_mask",
    "evaluate",
    "iterative_fuse",
    "load_bracket",
    "make_bracket",
    "mu_law",
    "physics_tonemap",
    "plan",
    "pseudo_hdr",
    "psnr",
    "read_pfm",
    "select_reference",
    "simulate_ldr",
    "simulate_ldr_simplified",
    "ssim",
    "structure_tensor",
    "tonenet_apply",
    "write_pfm",
]
