"""Multiply-accumulate accounting for the fusion network.

Closed-form counts per layer type:

- convolution:            H_out * W_out * K^2 * C_in * C_out
- depthwise convolution:  H_out * W_out * K^2 * C
- transposed attention:   2 * (H * W) * C^2   (the two (HW x C) by (C x C)
  matrix products; the projections around them are counted as convolutions)

Totals are additive over layers and linear in spatial area.
"""

from __future__ import annotations

from dataclasses import dataclass

from ihdr.images import DataError
from ihdr.fusion.network import FusionConfig, FusionModel


def conv_macs(h_out: int, w_out: int, k: int, c_in: int, c_out: int) -> int:
    return h_out * w_out * k * k * c_in * c_out


def depthwise_macs(h_out: int, w_out: int, k: int, c: int) -> int:
    return h_out * w_out * k * k * c


def attention_macs(h: int, w: int, c: int) -> int:
    return 2 * h * w * c * c


@dataclass(frozen=True)
class LayerMacs:
    name: str
    kind: str
    macs: int


@dataclass(frozen=True)
class MacReport:
    rows: tuple
    total: int

    def table(self) -> str:
        width = max(len(r.name) for r in self.rows)
        lines = [f"{r.name:<{width}}  {r.kind:<9}  {r.macs:>14,}" for r in self.rows]
        lines.append(f"{'total':<{width}}  {'':<9}  {self.total:>14,}")
        return "\n".join(lines)


def _scat_rows(name, h, w, c, c_prior):
    return [
        LayerMacs(f"{name}.qkv", "conv", conv_macs(h, w, 1, c, 3 * c)),
        LayerMacs(f"{name}.dw", "depthwise", depthwise_macs(h, w, 3, 3 * c)),
        LayerMacs(f"{name}.prior_proj", "conv", conv_macs(h, w, 1, c_prior, c)),
        LayerMacs(f"{name}.attn", "attention", attention_macs(h, w, c)),
        LayerMacs(f"{name}.out_proj", "conv", conv_macs(h, w, 1, c, c)),
    ]


def count_macs(model, h: int, w: int) -> MacReport:
    """Per-layer and total MACs for one forward pass at resolution h x w."""
    config = model.config if isinstance(model, FusionModel) else model
    if not isinstance(config, FusionConfig):
        raise DataError(f"count_macs expects a FusionModel or FusionConfig, got {type(model)}")
    ch = config.channels
    divisor = 2 ** (config.levels - 1)
    if h % divisor or w % divisor:
        raise DataError(f"resolution {h}x{w} not divisible by 2^(levels-1) = {divisor}")

    sizes = [(h >> level, w >> level) for level in range(config.levels)]
    rows = []
    for branch in ("ref", "nr"):
        rows.append(
            LayerMacs(f"enc.{branch}_embed", "conv", conv_macs(h, w, 3, config.in_channels, ch[0]))
        )
    for level, c in enumerate(ch):
        hl, wl = sizes[level]
        for branch in ("ref", "nr"):
            rows.extend(_scat_rows(f"enc.{branch}.scat{level}", hl, wl, c, config.prior_channels))
        rows.append(LayerMacs(f"enc.fuse{level}", "conv", conv_macs(hl, wl, 1, 2 * c, c)))
        if level < config.levels - 1:
            hn, wn = sizes[level + 1]
            for branch in ("ref", "nr"):
                rows.append(
                    LayerMacs(f"enc.{branch}_down{level}", "conv", conv_macs(hn, wn, 3, c, ch[level + 1]))
                )
    for level in range(config.levels - 1, -1, -1):
        hl, wl = sizes[level]
        rows.extend(_scat_rows(f"dec.scat{level}", hl, wl, ch[level], config.prior_channels))
        if level > 0:
            hp, wp = sizes[level - 1]
            rows.append(LayerMacs(f"dec.up{level}", "conv", conv_macs(hp, wp, 3, ch[level], ch[level - 1])))
            rows.append(
                LayerMacs(
                    f"dec.merge{level - 1}", "conv", conv_macs(hp, wp, 1, 2 * ch[level - 1], ch[level - 1])
                )
            )
    rows.append(LayerMacs("head", "conv", conv_macs(h, w, 3, ch[0], 3)))
    return MacReport(rows=tuple(rows), total=sum(r.macs for r in rows))
