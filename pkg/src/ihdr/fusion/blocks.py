"""Building blocks of the fusion network: channel layer norm and the
semi-cross attention transformer (SCAT).

SCAT is a channel-transposed attention block in which an external prior map
modulates the key and value branches element-wise.  With the prior pathway
masked (P = 1) the block degenerates exactly to the plain transposed
attention it was derived from, which is also exposed here as
``mdta_attention`` so the equivalence can be asserted directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ihdr.fusion import autodiff as ad
from ihdr.fusion.autodiff import Tensor, as_tensor

LN_EPS = 1e-6
L2_EPS = 1e-12


@dataclass
class ScatParams:
    """Parameters of one SCAT block operating on C-channel features."""

    ln_scale: np.ndarray  # (C,)
    ln_shift: np.ndarray  # (C,)
    qkv_w: np.ndarray  # (3C, C, 1, 1), bias-free
    dw_w: np.ndarray  # (3C, 3, 3), depthwise, bias-free
    prior_w: np.ndarray  # (C, C_prior, 1, 1), bias-free
    log_alpha: np.ndarray  # scalar; temperature alpha = exp(log_alpha) > 0
    out_w: np.ndarray  # (C, C, 1, 1), bias-free

    @property
    def channels(self) -> int:
        return self.ln_scale.shape[0]

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def as_dict(self):
        return {
            "ln_scale": self.ln_scale,
            "ln_shift": self.ln_shift,
            "qkv_w": self.qkv_w,
            "dw_w": self.dw_w,
            "prior_w": self.prior_w,
            "log_alpha": self.log_alpha,
            "out_w": self.out_w,
        }


SCAT_PARAM_KEYS = ("ln_scale", "ln_shift", "qkv_w", "dw_w", "prior_w", "log_alpha", "out_w")


def init_scat_params(rng, channels, prior_channels=1) -> ScatParams:
    """Glorot-style init; layer norm starts as identity, alpha starts at 1."""
    return ScatParams(
        ln_scale=np.ones(channels),
        ln_shift=np.zeros(channels),
        qkv_w=_glorot(rng, (3 * channels, channels, 1, 1)),
        dw_w=rng.normal(0.0, 1.0 / 3.0, size=(3 * channels, 3, 3)),
        prior_w=_glorot(rng, (channels, prior_channels, 1, 1)),
        log_alpha=np.zeros(()),
        out_w=_glorot(rng, (channels, channels, 1, 1)),
    )


def _glorot(rng, shape):
    cout, cin = shape[0], shape[1]
    ksq = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    std = np.sqrt(2.0 / (ksq * (cin + cout)))
    return rng.normal(0.0, std, size=shape)


def layer_norm(x, scale, shift, name="ln"):
    """Normalize each spatial position across channels of a (C, H, W) map."""
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    c = x.shape[0]
    mu = ad.tmean(x, axis=0, keepdims=True, name=f"{name}.mu")
    xc = ad.sub(x, mu, name=f"{name}.center")
    var = ad.tmean(ad.mul(xc, xc), axis=0, keepdims=True, name=f"{name}.var")
    xh = ad.div(xc, ad.sqrt(ad.add(var, LN_EPS), name=f"{name}.std"), name=f"{name}.norm")
    sc = ad.reshape(scale, (c, 1, 1))
    sh = ad.reshape(shift, (c, 1, 1))
    return ad.add(ad.mul(xh, sc), sh, name=name)


def l2_normalize_columns(p, name="l2norm"):
    """Scale each column of an (S, C) matrix to unit L2 norm."""
    p = as_tensor(p)
    sq = ad.tsum(ad.mul(p, p), axis=0, keepdims=True, name=f"{name}.sq")
    return ad.div(p, ad.sqrt(ad.add(sq, L2_EPS)), name=name)


def attention_core(q2, k2, v2, alpha, p2=None, name="attn"):
    """Channel-transposed attention on (S, C) matrices, S = H*W.

    With a prior matrix ``p2`` the key and value branches are modulated
    element-wise before the two matrix products; ``p2=None`` runs the plain
    transposed-attention baseline.  Returns ``(out2, attn)`` where ``attn``
    is the row-stochastic C x C attention matrix.
    """
    q2, k2, v2 = as_tensor(q2), as_tensor(k2), as_tensor(v2)
    alpha = as_tensor(alpha)
    if p2 is None:
        kk, vv = k2, v2
    else:
        p2 = as_tensor(p2)
        kk = ad.mul(p2, k2, name=f"{name}.pk")
        vv = ad.mul(p2, v2, name=f"{name}.pv")
    logits = ad.div(
        ad.matmul(ad.transpose(kk), q2, name=f"{name}.logits"), alpha, name=f"{name}.scale"
    )
    attn = ad.softmax(logits, axis=1, name=f"{name}.softmax")
    out2 = ad.matmul(vv, attn, name=f"{name}.mix")
    return out2, attn


def _to_chw(x):
    """Accept (C, H, W) or (1, C, H, W) arrays/Tensors; return a (C, H, W) Tensor."""
    t = as_tensor(x)
    if t.data.ndim == 4:
        if t.data.shape[0] != 1:
            raise ValueError(f"expected batch size 1, got shape {t.data.shape}")
        t = ad.reshape(t, t.data.shape[1:])
    if t.data.ndim != 3:
        raise ValueError(f"expected a (C, H, W) feature map, got shape {t.data.shape}")
    return t


def scat_block(x, prior, params, name="scat", return_aux=False):
    """One SCAT block: LN -> 1x1 conv -> 3x3 depthwise -> chunked Q/K/V ->
    prior-modulated transposed attention -> 1x1 projection -> residual.

    ``params`` maps the SCAT parameter keys to Tensors (or arrays).  With
    ``prior=None`` the prior pathway is masked: P is the all-ones matrix.
    """
    x = _to_chw(x)
    get = params.get if hasattr(params, "get") else params.as_dict().get
    c, h, w = x.shape
    s = h * w

    y = layer_norm(x, get("ln_scale"), get("ln_shift"), name=f"{name}.ln")
    qkv = ad.conv2d(y, get("qkv_w"), padding=0, name=f"{name}.qkv")
    qkv = ad.depthwise_conv2d(qkv, get("dw_w"), padding=1, name=f"{name}.dw")
    q = ad.narrow(qkv, 0, 0, c, name=f"{name}.q")
    k = ad.narrow(qkv, 0, c, c, name=f"{name}.k")
    v = ad.narrow(qkv, 0, 2 * c, c, name=f"{name}.v")
    q2 = ad.transpose(ad.reshape(q, (c, s)))
    k2 = ad.transpose(ad.reshape(k, (c, s)))
    v2 = ad.transpose(ad.reshape(v, (c, s)))

    if prior is None:
        p2 = Tensor(np.ones((s, c)), name=f"{name}.p_masked")
    else:
        prior = _to_chw(prior)
        if prior.shape[1:] != (h, w):
            raise ValueError(
                f"{name}: prior is {prior.shape[1:]}, feature map is {(h, w)} (shape mismatch)"
            )
        p0 = ad.conv2d(prior, get("prior_w"), padding=0, name=f"{name}.prior_proj")
        p2 = l2_normalize_columns(ad.transpose(ad.reshape(p0, (c, s))), name=f"{name}.p")

    alpha = ad.exp(as_tensor(get("log_alpha")), name=f"{name}.alpha")
    out2, attn = attention_core(q2, k2, v2, alpha, p2=p2, name=f"{name}.attn")
    out = ad.reshape(ad.transpose(out2), (c, h, w))
    pre_residual = ad.conv2d(out, get("out_w"), padding=0, name=f"{name}.out_proj")
    result = ad.add(x, pre_residual, name=name)
    if return_aux:
        return result, {"attn": attn, "pre_residual": pre_residual, "p": p2, "q": q2, "k": k2, "v": v2}
    return result


def scat_attention(x_in, x_prior, params: ScatParams, return_aux=False):
    """Array-level SCAT block; see ``scat_block`` for the graph version.

    ``x_in`` is a (C, H, W) or (1, C, H, W) array; ``x_prior`` may be None
    to mask the prior pathway.  Returns an array shaped like ``x_in``.
    """
    tparams = {key: Tensor(val, name=key) for key, val in params.as_dict().items()}
    prior = None if x_prior is None else as_tensor(x_prior)
    out = scat_block(as_tensor(x_in), prior, tparams, return_aux=return_aux)
    if return_aux:
        result, aux = out
        return np.asarray(result.data).reshape(np.shape(x_in)), aux
    return np.asarray(out.data).reshape(np.shape(x_in))


def mdta_attention(x_in, params: ScatParams):
    """Plain transposed-attention baseline: the SCAT pipeline without any
    prior multiplication.  Equals ``scat_attention(x, None, params)`` exactly.
    """
    x = _to_chw(as_tensor(x_in))
    c, h, w = x.shape
    s = h * w
    tp = {key: Tensor(val, name=key) for key, val in params.as_dict().items()}

    y = layer_norm(x, tp["ln_scale"], tp["ln_shift"], name="mdta.ln")
    qkv = ad.conv2d(y, tp["qkv_w"], padding=0, name="mdta.qkv")
    qkv = ad.depthwise_conv2d(qkv, tp["dw_w"], padding=1, name="mdta.dw")
    q2 = ad.transpose(ad.reshape(ad.narrow(qkv, 0, 0, c), (c, s)))
    k2 = ad.transpose(ad.reshape(ad.narrow(qkv, 0, c, c), (c, s)))
    v2 = ad.transpose(ad.reshape(ad.narrow(qkv, 0, 2 * c, c), (c, s)))
    alpha = ad.exp(as_tensor(tp["log_alpha"]))
    out2, _ = attention_core(q2, k2, v2, alpha, p2=None, name="mdta.attn")
    out = ad.reshape(ad.transpose(out2), (c, h, w))
    out = ad.conv2d(out, tp["out_w"], padding=0, name="mdta.out_proj")
    result = ad.add(x, out)
    return np.asarray(result.data).reshape(np.shape(x_in))
