"""Mappings between the linear HDR domain and nonlinear LDR-like domains.

Two mappings live here:

- mu-law logarithmic compression, used for losses and tonemapped-domain
  metrics;
- the physics-based mapping L = clamp((c*H)^(1/gamma), 0, 1) that returns a
  fused HDR estimate to the nonlinear input domain so it can act as the
  reference frame of the next fusion step.  The mapped frame carries the
  synthetic exposure_time = c, which makes the pseudo-HDR reconstruction
  L**gamma / t an exact inverse on the unclipped range.

The physics mapping has an ``analytic`` backend (the closed form above) and
an optional ``learned`` backend: a small pointwise convolutional network
whose training target is exactly the analytic map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ihdr.images import DataError, HdrImage, LdrImage
from ihdr.sensor import SensorParams, simulate_ldr_simplified
from ihdr.fusion import autodiff as ad

TONENET_CHANNELS = 16  # hidden width of the learned backend (3 conv layers)


def mu_law(hdr, mu: float = 5000.0) -> np.ndarray:
    """Logarithmic range compression M(H) = log(1 + mu*H) / log(1 + mu).

    Maps [0, 1] onto [0, 1] strictly monotonically.  Inputs are expected to
    be range-compressed to [0, 1] beforehand (divide by the relevant peak);
    values above 1 are compressed continuously rather than rejected.
    """
    if not mu > 0:
        raise DataError(f"mu must be positive, got {mu!r}")
    pixels = hdr.pixels if isinstance(hdr, HdrImage) else np.asarray(hdr, dtype=np.float64)
    return np.log1p(mu * pixels) / np.log1p(mu)


def mu_law_inverse(mapped, mu: float = 5000.0) -> np.ndarray:
    """Exact inverse of ``mu_law``: H = ((1 + mu)^M - 1) / mu."""
    mapped = np.asarray(mapped, dtype=np.float64)
    return np.expm1(mapped * np.log1p(mu)) / mu


def physics_tonemap(hdr: HdrImage, params: SensorParams) -> LdrImage:
    """The deterministic simplified exposure, reused as a tonemapping.

    Shares its contract with ``sensor.simulate_ldr_simplified``: same
    formula, same synthetic exposure_time = c on the output.
    """
    return simulate_ldr_simplified(hdr, params)


@dataclass
class ToneNetModel:
    """Domain-mapping model: analytic closed form or a small learned net.

    The learned backend is three bias-free-except-last 1x1 convolutions
    (tonemapping is pointwise) with softplus hidden activations and a
    sigmoid output; parameters are stored as a flat name->array dict.
    """

    backend: str = "analytic"
    params: SensorParams = field(default_factory=SensorParams)
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.backend not in ("analytic", "learned"):
            raise DataError(f"unknown tonenet backend {self.backend!r}")
        if self.backend == "learned" and not self.weights:
            self.weights = init_tonenet_weights(np.random.default_rng(0))

    def param_count(self) -> int:
        return int(sum(w.size for w in self.weights.values()))


def init_tonenet_weights(rng) -> dict:
    c = TONENET_CHANNELS
    scale = 0.5
    return {
        "w0": rng.normal(0.0, scale, size=(c, 3, 1, 1)),
        "b0": np.zeros((c, 1, 1)),
        "w1": rng.normal(0.0, scale / np.sqrt(c), size=(c, c, 1, 1)),
        "b1": np.zeros((c, 1, 1)),
        "w2": rng.normal(0.0, scale / np.sqrt(c), size=(3, c, 1, 1)),
        "b2": np.zeros((3, 1, 1)),
    }


def tonenet_graph(hdr_chw, weights_t):
    """Differentiable learned-backend forward on a (3, H, W) node."""
    x = ad.as_tensor(hdr_chw)
    x = ad.add(ad.conv2d(x, weights_t["w0"], name="tonenet.conv0"), weights_t["b0"])
    x = ad.softplus(x, name="tonenet.act0")
    x = ad.add(ad.conv2d(x, weights_t["w1"], name="tonenet.conv1"), weights_t["b1"])
    x = ad.softplus(x, name="tonenet.act1")
    x = ad.add(ad.conv2d(x, weights_t["w2"], name="tonenet.conv2"), weights_t["b2"])
    return ad.sigmoid(x, name="tonenet.out")


def analytic_tonemap_graph(hdr_chw, params: SensorParams):
    """Differentiable analytic mapping clamp((c*H)^(1/gamma), 0, 1).

    Implemented as clip-then-power, which is algebraically identical to
    power-then-clip because c*H >= 1 iff (c*H)^(1/gamma) >= 1.
    """
    scaled = ad.clip(ad.mul(ad.as_tensor(hdr_chw), params.c), 0.0, 1.0, name="tonemap.clip")
    return ad.pow_const(scaled, 1.0 / params.gamma, name="tonemap.pow")


def tonenet_apply(hdr: HdrImage, model: ToneNetModel) -> LdrImage:
    """Map a linear HDR estimate back to the nonlinear domain.

    Both backends return a frame with exposure_time = c so the result can
    re-enter the fusion loop as a reference frame.
    """
    if model.backend == "analytic":
        return physics_tonemap(hdr, model.params)
    weights_t = {k: ad.Tensor(v, name=f"tonenet.{k}") for k, v in model.weights.items()}
    out = tonenet_graph(np.transpose(hdr.pixels, (2, 0, 1)), weights_t)
    pixels = np.clip(np.transpose(out.data, (1, 2, 0)), 0.0, 1.0)
    return LdrImage(pixels=pixels, exposure_time=model.params.c)


def train_tonenet(
    hdr_patches,
    params: SensorParams,
    steps: int = 1500,
    lr: float = 1e-2,
    seed: int = 0,
) -> tuple:
    """Fit the learned backend to the analytic mapping on HDR patches.

    Plain Adam on an L1 objective; the analytic map is the training target,
    so a converged learned backend reproduces it.  Returns
    ``(ToneNetModel, loss_history)``.
    """
    rng = np.random.default_rng(seed)
    weights = init_tonenet_weights(rng)
    patches = [np.transpose(p.pixels if isinstance(p, HdrImage) else p, (2, 0, 1)) for p in hdr_patches]
    targets = [
        np.clip((params.c * p) ** (1.0 / params.gamma), 0.0, 1.0) for p in patches
    ]

    m = {k: np.zeros_like(v) for k, v in weights.items()}
    v = {k: np.zeros_like(val) for k, val in weights.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    history = []
    for step in range(steps):
        idx = int(rng.integers(len(patches)))
        weights_t = {k: ad.Tensor(val, name=f"tonenet.{k}") for k, val in weights.items()}
        out = tonenet_graph(patches[idx], weights_t)
        loss = ad.tmean(ad.absolute(ad.sub(out, targets[idx])), name="tonenet.loss")
        ad.backward(loss)
        history.append(float(loss.data))
        t = step + 1
        for k in weights:
            g = weights_t[k].grad
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g * g
            mhat = m[k] / (1 - beta1**t)
            vhat = v[k] / (1 - beta2**t)
            weights[k] = weights[k] - lr * mhat / (np.sqrt(vhat) + eps)
    model = ToneNetModel(backend="learned", params=params, weights=weights)
    return model, history
