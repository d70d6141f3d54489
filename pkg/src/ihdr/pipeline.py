"""Orchestration of iterative pairwise fusion for arbitrary bracket sizes.

A reference frame is selected (mid-exposed and sharp, unless the manifest
pins one), the remaining frames are ordered by closeness in average
luminance, and the bracket is folded pairwise: fuse the current reference
with the next frame, map the intermediate HDR back to the nonlinear domain,
and use it as the new reference.  For K frames this performs exactly K-1
fusions and K-2 domain mappings; side information is recomputed fresh
against the current (possibly synthesized) reference at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ihdr.images import Bracket, DataError, HdrImage, mean_luminance, sharpness
from ihdr.sensor import SensorParams
from ihdr.sideinfo import build_bundle
from ihdr.tonemap import ToneNetModel, tonenet_apply
from ihdr.fusion.baseline import baseline_fuse
from ihdr.fusion.network import FusionModel, dihdr_forward


@dataclass(frozen=True)
class FusionPlan:
    """Reference choice plus the luminance-sorted non-reference order."""

    reference_index: int
    nonref_order: tuple
    fuser: str = "baseline"  # "baseline" or "network"
    mapper: str = "analytic"  # "analytic" or "learned"

    def __post_init__(self):
        if self.fuser not in ("baseline", "network"):
            raise DataError(f"unknown fuser backend {self.fuser!r}")
        if self.mapper not in ("analytic", "learned"):
            raise DataError(f"unknown mapper backend {self.mapper!r}")


def select_reference(bracket: Bracket) -> int:
    """Pick the mid-exposed, sharp frame; a manifest override wins.

    Among frames at least as sharp as the median, the one whose mean
    luminance is closest to 0.5 is chosen; ties go to the lower index.
    """
    if bracket.reference_index is not None:
        return bracket.reference_index
    scores = [sharpness(frame) for frame in bracket.frames]
    median = float(np.median(scores))
    candidates = [i for i, s in enumerate(scores) if s >= median]
    return min(candidates, key=lambda i: (abs(mean_luminance(bracket[i]) - 0.5), i))


def plan(bracket: Bracket, fuser: str = "baseline", mapper: str = "analytic") -> FusionPlan:
    """Order non-reference frames by |mean luminance - reference|, ascending.

    Equal distances keep the original frame order (stable sort).
    """
    ref = select_reference(bracket)
    ref_luma = mean_luminance(bracket[ref])
    others = [i for i in range(len(bracket)) if i != ref]
    order = sorted(others, key=lambda i: (abs(mean_luminance(bracket[i]) - ref_luma), i))
    return FusionPlan(reference_index=ref, nonref_order=tuple(order), fuser=fuser, mapper=mapper)


def iterative_fuse(
    bracket: Bracket,
    fusion_plan: FusionPlan,
    model: FusionModel | None = None,
    tonenet: ToneNetModel | None = None,
    params: SensorParams | None = None,
    on_intermediate=None,
) -> HdrImage:
    """Fold the bracket into one HDR image by repeated pairwise fusion.

    ``on_intermediate(step, hdr)`` is invoked after every fusion, which the
    CLI uses to dump intermediates.  Returns the final linear-domain result.
    """
    params = params or SensorParams()
    tonenet = tonenet or ToneNetModel(backend=fusion_plan.mapper, params=params)
    if not fusion_plan.nonref_order:
        raise DataError("fusion plan has no non-reference frames")
    indices = set(fusion_plan.nonref_order) | {fusion_plan.reference_index}
    if indices != set(range(len(bracket))):
        raise DataError("fusion plan does not cover the bracket exactly")
    if fusion_plan.fuser == "network" and model is None:
        raise DataError("network fuser requires a model")

    ref = bracket[fusion_plan.reference_index]
    result = None
    remaining = list(fusion_plan.nonref_order)
    for step, nonref_index in enumerate(remaining):
        bundle = build_bundle(ref, bracket[nonref_index], gamma=params.gamma)
        if fusion_plan.fuser == "network":
            result = dihdr_forward(bundle, model)
        else:
            result = baseline_fuse(bundle)
        if on_intermediate is not None:
            on_intermediate(step, result)
        if step < len(remaining) - 1:
            ref = tonenet_apply(result, tonenet)
    return result
