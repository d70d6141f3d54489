"""Loss, gradients, and the training loop for the fusion network.

The objective is an L1 loss between mu-law compressions of the estimated
and ground-truth HDR, plus a weighted L1 between the tonemapped estimate
and the physics-tonemapped ground truth:

    loss = mean|M(h_hat) - M(h_gt)| + lambda * mean|T_hat - T_gt|

Optimization is Adam with decoupled weight decay and a cosine-annealed
step size.  Everything is seeded and deterministic: two runs with the same
seed and data produce bit-identical loss histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ihdr.images import DataError, HdrImage, LdrImage
from ihdr.sensor import SensorParams
from ihdr.sideinfo import SideInfoBundle
from ihdr.fusion import autodiff as ad
from ihdr.fusion.network import FusionModel, bundle_inputs, forward_graph


class TrainingDiverged(RuntimeError):
    """Loss exceeded the divergence limit; training aborted."""


@dataclass
class TrainConfig:
    """Optimizer and objective hyperparameters.

    ``lr_init``/``lr_final`` bound the cosine-annealed schedule;
    ``lambda_map`` weights the tonemapping term; ``mu`` is the mu-law
    constant; ``patch`` is the training crop size (32 at desk scale, 128 at
    full scale).
    """

    beta1: float = 0.9
    beta2: float = 0.999
    lr_init: float = 2e-4
    lr_final: float = 1e-6
    weight_decay: float = 1e-4
    lambda_map: float = 0.1
    mu: float = 5000.0
    patch: int = 32
    epochs: int = 1
    batch: int = 1
    seed: int = 0
    learned_tonenet: bool = False
    divergence_limit: float = 1e6
    sensor: SensorParams = field(default_factory=SensorParams)

    def __post_init__(self):
        if not 0 < self.lr_final <= self.lr_init:
            raise DataError("require 0 < lr_final <= lr_init")
        if self.lambda_map < 0:
            raise DataError("lambda_map must be non-negative")


def _mu_law_graph(x, mu):
    return ad.div(ad.log1p(ad.mul(x, mu), name="loss.mulaw"), np.log1p(mu))


def loss_graph(h_hat, h_gt, t_hat, t_gt, cfg: TrainConfig):
    """Objective as a graph node; inputs may be Tensors or arrays."""
    m_hat = _mu_law_graph(ad.as_tensor(h_hat), cfg.mu)
    m_gt = _mu_law_graph(ad.as_tensor(h_gt), cfg.mu)
    hdr_term = ad.tmean(ad.absolute(ad.sub(m_hat, m_gt)), name="loss.hdr_l1")
    map_term = ad.tmean(ad.absolute(ad.sub(ad.as_tensor(t_hat), ad.as_tensor(t_gt))), name="loss.map_l1")
    return ad.add(hdr_term, ad.mul(map_term, cfg.lambda_map), name="loss")


def _as_array(x):
    if isinstance(x, (HdrImage, LdrImage)):
        return x.pixels
    return np.asarray(x, dtype=np.float64)


def loss(h_hat, h_gt, t_hat, t_gt, cfg: TrainConfig) -> float:
    """Scalar objective on images or arrays (shapes must match pairwise)."""
    h_hat, h_gt = _as_array(h_hat), _as_array(h_gt)
    t_hat, t_gt = _as_array(t_hat), _as_array(t_gt)
    if h_hat.shape != h_gt.shape or t_hat.shape != t_gt.shape:
        raise DataError(
            f"loss shape mismatch: {h_hat.shape} vs {h_gt.shape}, {t_hat.shape} vs {t_gt.shape}"
        )
    return float(loss_graph(h_hat, h_gt, t_hat, t_gt, cfg).data)


def _forward_loss(model: FusionModel, bundle: SideInfoBundle, h_gt, t_gt, cfg: TrainConfig, tonenet_weights=None):
    """Build the full per-sample graph; returns (loss_node, param_tensors)."""
    # Imported here: tonemap's learned backend reuses this package's autodiff,
    # so a module-level import would be circular.
    from ihdr.tonemap import analytic_tonemap_graph, tonenet_graph

    params_t = model.tensors()
    h_hat = forward_graph(params_t, bundle_inputs(bundle, model.config), model.config)
    if tonenet_weights is not None:
        tone_t = {k: ad.Tensor(v, name=f"tonenet.{k}") for k, v in tonenet_weights.items()}
        t_hat = tonenet_graph(h_hat, tone_t)
        params_t.update({f"tonenet.{k}": t for k, t in tone_t.items()})
    else:
        t_hat = analytic_tonemap_graph(h_hat, cfg.sensor)
    h_gt_chw = np.transpose(_as_array(h_gt), (2, 0, 1))
    t_gt_chw = np.transpose(_as_array(t_gt), (2, 0, 1))
    return loss_graph(h_hat, h_gt_chw, t_hat, t_gt_chw, cfg), params_t


def gradient(model: FusionModel, bundle: SideInfoBundle, targets, cfg: TrainConfig | None = None) -> dict:
    """Analytic reverse-mode gradient of the objective for one sample.

    ``targets`` is ``(h_gt, t_gt)``.  Returns a dict of parameter-shaped
    gradient arrays keyed like ``model.params``; NaNs anywhere in the
    forward or backward pass raise ``autodiff.NanError`` naming the layer.
    """
    cfg = cfg or TrainConfig()
    h_gt, t_gt = targets
    node, params_t = _forward_loss(model, bundle, h_gt, t_gt, cfg)
    if not np.isfinite(node.data):
        raise ad.NanError("loss is not finite at the current parameters")
    ad.backward(node)
    return {k: params_t[k].grad for k in model.params}


def cosine_lr(step: int, total_steps: int, lr_init: float, lr_final: float) -> float:
    """Cosine annealing hitting lr_init at step 0 and lr_final at the last step."""
    if total_steps <= 1:
        return lr_init
    progress = step / (total_steps - 1)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + np.cos(np.pi * progress))


class AdamW:
    """Adam with decoupled weight decay over a dict of parameter arrays.

    Decay applies to convolution weights only (names ending in ``w``);
    biases, layer-norm affines, and attention temperatures are not decayed.
    """

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        cfg = self.cfg
        self.t += 1
        for key, p in params.items():
            g = grads[key]
            self.m[key] = cfg.beta1 * self.m[key] + (1 - cfg.beta1) * g
            self.v[key] = cfg.beta2 * self.v[key] + (1 - cfg.beta2) * g * g
            mhat = self.m[key] / (1 - cfg.beta1**self.t)
            vhat = self.v[key] / (1 - cfg.beta2**self.t)
            update = mhat / (np.sqrt(vhat) + 1e-8)
            if key.endswith("w"):
                update = update + cfg.weight_decay * p
            params[key] = p - lr * update


@dataclass
class TrainResult:
    model: FusionModel
    loss_history: list
    lr_history: list
    tonenet: ToneNetModel | None = None


def train(dataset, cfg: TrainConfig, model: FusionModel | None = None) -> TrainResult:
    """Optimize the fusion network on ``(bundle, h_gt, t_gt)`` samples.

    Runs ``cfg.epochs`` epochs of shuffled mini-batches; the loss history
    has one entry per optimizer step (the mean batch loss before the
    update).  With ``cfg.learned_tonenet`` the mapping network trains
    jointly and is returned alongside the fusion model.
    """
    from ihdr.tonemap import ToneNetModel, init_tonenet_weights

    dataset = list(dataset)
    if not dataset:
        raise DataError("train requires a non-empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = model or FusionModel.init(seed=cfg.seed)

    params = model.params
    tonenet_weights = None
    if cfg.learned_tonenet:
        tonenet_weights = init_tonenet_weights(rng)
        params = dict(params)
        params.update({f"tonenet.{k}": v for k, v in tonenet_weights.items()})

    batches_per_epoch = int(np.ceil(len(dataset) / cfg.batch))
    total_steps = cfg.epochs * batches_per_epoch
    optimizer = AdamW(params, cfg)
    loss_history, lr_history = [], []

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        for b in range(batches_per_epoch):
            indices = order[b * cfg.batch : (b + 1) * cfg.batch]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            batch_loss = 0.0
            for i in indices:
                bundle, h_gt, t_gt = dataset[i]
                node, params_t = _forward_loss(
                    model, bundle, h_gt, t_gt, cfg, tonenet_weights=tonenet_weights
                )
                ad.backward(node)
                batch_loss += float(node.data)
                for k in grads:
                    grads[k] += params_t[k].grad
            batch_loss /= len(indices)
            for k in grads:
                grads[k] /= len(indices)

            if not np.isfinite(batch_loss) or batch_loss > cfg.divergence_limit:
                raise TrainingDiverged(
                    f"loss {batch_loss:g} at step {step} exceeds limit {cfg.divergence_limit:g}"
                )
            lr = cosine_lr(step, total_steps, cfg.lr_init, cfg.lr_final)
            optimizer.step(params, grads, lr)
            loss_history.append(batch_loss)
            lr_history.append(lr)
            step += 1

            if tonenet_weights is not None:
                for k in tonenet_weights:
                    tonenet_weights[k] = params[f"tonenet.{k}"]
            for k in model.params:
                model.params[k] = params[k]

    tonenet = None
    if cfg.learned_tonenet:
        tonenet = ToneNetModel(backend="learned", params=cfg.sensor, weights=tonenet_weights)
    return TrainResult(model=model, loss_history=loss_history, lr_history=lr_history, tonenet=tonenet)
