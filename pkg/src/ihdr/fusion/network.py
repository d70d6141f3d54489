"""The dual-input fusion network: a toy-scale U-shaped transformer.

Two branches encode the reference and non-reference inputs (each the
channel-stack of an LDR frame and its pseudo-HDR).  Every encoder level runs
one SCAT block per branch - the reference branch guided by the reversed
flat map, the non-reference branch by the difference mask - then fuses the
branches by concatenation + 1x1 convolution.  The decoder mirrors the
levels, re-injecting the max-pooled texture prior through the SCAT prior
pathway at each scale, and ends in a softplus head so the output is a valid
non-negative HDR estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ihdr.images import DataError, HdrImage
from ihdr.sideinfo import SideInfoBundle, max_pool_levels, multiscale_st
from ihdr.fusion import autodiff as ad
from ihdr.fusion import blocks


@dataclass(frozen=True)
class FusionConfig:
    """Architecture hyperparameters; defaults are the desk-scale toy model."""

    channels: tuple = (8, 16, 32)
    in_channels: int = 6  # LDR frame stacked with its pseudo-HDR
    prior_channels: int = 1

    @property
    def levels(self) -> int:
        return len(self.channels)

    def to_json(self) -> dict:
        return {
            "channels": list(self.channels),
            "in_channels": self.in_channels,
            "prior_channels": self.prior_channels,
        }

    @classmethod
    def from_json(cls, doc) -> "FusionConfig":
        return cls(
            channels=tuple(doc["channels"]),
            in_channels=int(doc["in_channels"]),
            prior_channels=int(doc["prior_channels"]),
        )


def _scat_entries(rng, prefix, channels, prior_channels):
    params = blocks.init_scat_params(rng, channels, prior_channels)
    return {f"{prefix}.{key}": val for key, val in params.as_dict().items()}


def build_params(config: FusionConfig, rng) -> dict:
    """Initialize every parameter array, keyed by a dotted layer path."""
    ch = config.channels
    params = {}
    for branch in ("ref", "nr"):
        params[f"enc.{branch}_embed.w"] = blocks._glorot(rng, (ch[0], config.in_channels, 3, 3))
        params[f"enc.{branch}_embed.b"] = np.zeros((ch[0], 1, 1))
    for level, c in enumerate(ch):
        params.update(_scat_entries(rng, f"enc.ref.scat{level}", c, config.prior_channels))
        params.update(_scat_entries(rng, f"enc.nr.scat{level}", c, config.prior_channels))
        params[f"enc.fuse{level}.w"] = blocks._glorot(rng, (c, 2 * c, 1, 1))
        params[f"enc.fuse{level}.b"] = np.zeros((c, 1, 1))
        if level < len(ch) - 1:
            for branch in ("ref", "nr"):
                params[f"enc.{branch}_down{level}.w"] = blocks._glorot(rng, (ch[level + 1], c, 3, 3))
                params[f"enc.{branch}_down{level}.b"] = np.zeros((ch[level + 1], 1, 1))
    for level, c in enumerate(ch):
        params.update(_scat_entries(rng, f"dec.scat{level}", c, config.prior_channels))
        if level > 0:
            params[f"dec.up{level}.w"] = blocks._glorot(rng, (ch[level - 1], c, 3, 3))
            params[f"dec.up{level}.b"] = np.zeros((ch[level - 1], 1, 1))
            params[f"dec.merge{level - 1}.w"] = blocks._glorot(rng, (ch[level - 1], 2 * ch[level - 1], 1, 1))
            params[f"dec.merge{level - 1}.b"] = np.zeros((ch[level - 1], 1, 1))
    params["head.w"] = blocks._glorot(rng, (3, ch[0], 3, 3))
    params["head.b"] = np.zeros((3, 1, 1))
    return params


class _View(dict):
    """Prefix view over the flat parameter dict, for SCAT blocks."""

    def __init__(self, params, prefix):
        super().__init__()
        self._params = params
        self._prefix = prefix

    def get(self, key, default=None):
        return self._params.get(f"{self._prefix}.{key}", default)


def _conv(x, params, key, stride=1, padding=1, name=None):
    out = ad.conv2d(x, params[f"{key}.w"], stride=stride, padding=padding, name=name or key)
    return ad.add(out, params[f"{key}.b"], name=f"{key}.bias")


def forward_graph(params_t, inputs, config: FusionConfig):
    """Build the forward graph; returns the (3, H, W) HDR output node.

    ``inputs`` carries ``ref_in``/``nonref_in`` (in_channels, H, W) arrays
    and the per-level prior pyramids ``s_priors``/``d_priors``.
    """
    ch = config.channels
    s_priors = [ad.as_tensor(p[None], name=f"s_prior{l}") for l, p in enumerate(inputs["s_priors"])]
    d_priors = [ad.as_tensor(p[None], name=f"d_prior{l}") for l, p in enumerate(inputs["d_priors"])]

    ref = _conv(ad.as_tensor(inputs["ref_in"], name="ref_in"), params_t, "enc.ref_embed")
    nr = _conv(ad.as_tensor(inputs["nonref_in"], name="nonref_in"), params_t, "enc.nr_embed")

    fused = []
    for level in range(config.levels):
        ref = blocks.scat_block(ref, s_priors[level], _View(params_t, f"enc.ref.scat{level}"), name=f"enc.ref.scat{level}")
        nr = blocks.scat_block(nr, d_priors[level], _View(params_t, f"enc.nr.scat{level}"), name=f"enc.nr.scat{level}")
        merged = ad.concat([ref, nr], axis=0, name=f"enc.cat{level}")
        fused.append(_conv(merged, params_t, f"enc.fuse{level}", padding=0))
        if level < config.levels - 1:
            ref = _conv(ref, params_t, f"enc.ref_down{level}", stride=2)
            nr = _conv(nr, params_t, f"enc.nr_down{level}", stride=2)

    x = fused[-1]
    for level in range(config.levels - 1, -1, -1):
        x = blocks.scat_block(x, s_priors[level], _View(params_t, f"dec.scat{level}"), name=f"dec.scat{level}")
        if level > 0:
            x = _conv(ad.upsample2x(x, name=f"dec.upsample{level}"), params_t, f"dec.up{level}")
            x = ad.concat([x, fused[level - 1]], axis=0, name=f"dec.cat{level - 1}")
            x = _conv(x, params_t, f"dec.merge{level - 1}", padding=0)
    out = _conv(x, params_t, "head")
    return ad.softplus(out, name="head.softplus")


@dataclass
class FusionModel:
    """Toy fusion network: architecture config plus a flat parameter dict.

    Parameters are stored as named float64 arrays; ``flat_params`` /
    ``load_flat`` give the vector view used by the optimizer and the
    checkpoint format.
    """

    config: FusionConfig = field(default_factory=FusionConfig)
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config: FusionConfig | None = None, seed: int = 0) -> "FusionModel":
        config = config or FusionConfig()
        return cls(config=config, params=build_params(config, np.random.default_rng(seed)))

    def param_names(self):
        return list(self.params.keys())

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.params])

    def load_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        needed = self.param_count()
        if vec.size != needed:
            raise DataError(f"parameter vector has {vec.size} entries, model needs {needed}")
        offset = 0
        for key in self.params:
            size = self.params[key].size
            self.params[key] = vec[offset : offset + size].reshape(self.params[key].shape)
            offset += size

    def tensors(self) -> dict:
        return {k: ad.Tensor(v, name=k) for k, v in self.params.items()}


def bundle_inputs(bundle: SideInfoBundle, config: FusionConfig) -> dict:
    """Convert a side-info bundle into the network's input arrays."""
    h, w = bundle.ref_ldr.pixels.shape[:2]
    divisor = 2 ** (config.levels - 1)
    if h % divisor or w % divisor:
        raise DataError(f"input {h}x{w} not divisible by 2^(levels-1) = {divisor}")

    def chw(img):
        return np.transpose(img.pixels, (2, 0, 1))

    return {
        "ref_in": np.concatenate([chw(bundle.ref_ldr), chw(bundle.ref_pseudo_hdr)], axis=0),
        "nonref_in": np.concatenate([chw(bundle.nonref_ldr), chw(bundle.nonref_pseudo_hdr)], axis=0),
        "s_priors": multiscale_st(bundle.st, config.levels),
        "d_priors": max_pool_levels(bundle.diff.mask, config.levels),
    }


def dihdr_forward(bundle: SideInfoBundle, model: FusionModel) -> HdrImage:
    """Fuse one reference/non-reference pair into an HDR estimate."""
    inputs = bundle_inputs(bundle, model.config)
    out = forward_graph(model.tensors(), inputs, model.config)
    return HdrImage(pixels=np.transpose(out.data, (1, 2, 0)))
