"""Objective, gradients, optimizer schedule, and training-loop contracts."""

import numpy as np
import pytest

from ihdr.sensor import SensorParams, make_bracket
from ihdr.sideinfo import build_bundle
from ihdr.tonemap import mu_law_inverse, physics_tonemap
from ihdr.fusion import autodiff as ad
from ihdr.fusion.network import FusionModel
from ihdr.fusion.training import (
    TrainConfig,
    TrainingDiverged,
    cosine_lr,
    gradient,
    loss,
    loss_graph,
    train,
)

from conftest import smooth_hdr


def make_sample(size=16, seed=0, offset=0.0):
    params = SensorParams()
    scene = smooth_hdr(size, seed=seed)
    bracket = make_bracket(scene, [0, 1], params, mode="simplified")
    bundle = build_bundle(bracket[0], bracket[1], gamma=params.gamma)
    from ihdr.images import HdrImage

    h_gt = HdrImage(pixels=scene.pixels + offset)
    return bundle, h_gt, physics_tonemap(h_gt, params)


class TestLoss:
    def test_zero_at_exact_fit(self, rng):
        h = rng.uniform(0.01, 0.2, size=(8, 8, 3))
        t = rng.uniform(0, 1, size=(8, 8, 3))
        assert loss(h, h, t, t, TrainConfig()) == 0.0

    def test_lambda_zero_drops_mapping_term(self, rng):
        cfg0 = TrainConfig(lambda_map=0.0)
        cfg1 = TrainConfig(lambda_map=0.1)
        h1 = rng.uniform(0.01, 0.2, size=(8, 8, 3))
        h2 = h1 + 0.01
        t1 = rng.uniform(0, 0.5, size=(8, 8, 3))
        t2 = t1 + 0.2
        assert loss(h1, h2, t1, t2, cfg0) == pytest.approx(loss(h1, h2, t1, t1, cfg1), rel=1e-12)

    def test_constructed_arithmetic_case(self):
        # |M(h_hat) - M(h_gt)| = 0.1 everywhere and |t_hat - t_gt| = 0.2
        # everywhere: loss = 0.1 + 0.1 * 0.2 = 0.12.  mu_law_inverse is the
        # oracle that manufactures the HDR values.
        cfg = TrainConfig(lambda_map=0.1)
        m_gt = np.full((8, 8, 3), 0.3)
        m_hat = np.full((8, 8, 3), 0.4)
        h_gt = mu_law_inverse(m_gt, cfg.mu)
        h_hat = mu_law_inverse(m_hat, cfg.mu)
        t_gt = np.full((8, 8, 3), 0.1)
        t_hat = np.full((8, 8, 3), 0.3)
        assert loss(h_hat, h_gt, t_hat, t_gt, cfg) == pytest.approx(0.12, abs=1e-9)

    def test_exact_fit_has_zero_gradient(self, rng):
        # L1 subgradient at zero is defined as zero, so a perfectly fitting
        # estimate receives no update anywhere
        h = ad.Tensor(rng.uniform(0.01, 0.2, size=(3, 8, 8)), name="h")
        t = ad.Tensor(rng.uniform(0, 1, size=(3, 8, 8)), name="t")
        node = loss_graph(h, h.data.copy(), t, t.data.copy(), TrainConfig())
        ad.backward(node)
        assert np.all(h.grad == 0.0)
        assert np.all(t.grad == 0.0)

    def test_shape_mismatch_rejected(self):
        from ihdr.images import DataError

        with pytest.raises(DataError, match="shape"):
            loss(np.zeros((4, 4, 3)), np.zeros((8, 8, 3)), np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), TrainConfig())


class TestGradient:
    def test_matches_finite_differences(self):
        bundle, h_gt, t_gt = make_sample(16, seed=1, offset=0.03)
        model = FusionModel.init(seed=2)
        cfg = TrainConfig()
        grads = gradient(model, bundle, (h_gt, t_gt), cfg)

        from ihdr.fusion.training import _forward_loss

        def loss_value():
            node, _ = _forward_loss(model, bundle, h_gt, t_gt, cfg)
            return float(node.data)

        rng = np.random.default_rng(0)
        names = list(model.params.keys())
        checked = 0
        h = 1e-4
        while checked < 20:
            key = names[int(rng.integers(len(names)))]
            flat = model.params[key].reshape(-1)
            idx = int(rng.integers(flat.size))
            analytic = grads[key].reshape(-1)[idx]
            if abs(analytic) < 1e-7:
                continue
            orig = flat[idx]
            flat[idx] = orig + h
            plus = loss_value()
            flat[idx] = orig - h
            minus = loss_value()
            flat[idx] = orig
            fd = (plus - minus) / (2 * h)
            assert abs(fd - analytic) / max(abs(fd) + abs(analytic), 1e-12) < 1e-4
            checked += 1

    def test_alpha_gradient_nonzero(self):
        bundle, h_gt, t_gt = make_sample(16, seed=3, offset=0.02)
        model = FusionModel.init(seed=4)
        grads = gradient(model, bundle, (h_gt, t_gt))
        alpha_grads = [abs(float(g)) for k, g in grads.items() if k.endswith("log_alpha")]
        assert max(alpha_grads) > 0

    def test_nan_fails_fast_naming_the_layer(self):
        bundle, h_gt, t_gt = make_sample(16, seed=5)
        model = FusionModel.init(seed=6)
        model.params["enc.fuse0.w"] = model.params["enc.fuse0.w"] * np.nan
        with pytest.raises(ad.NanError, match="enc.fuse0"):
            gradient(model, bundle, (h_gt, t_gt))


class TestSchedule:
    def test_endpoints(self):
        assert cosine_lr(0, 500, 2e-4, 1e-6) == pytest.approx(2e-4, abs=1e-12)
        assert cosine_lr(499, 500, 2e-4, 1e-6) == pytest.approx(1e-6, abs=1e-9)

    def test_monotone_decreasing(self):
        values = [cosine_lr(t, 100, 2e-4, 1e-6) for t in range(100)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_single_step_schedule(self):
        assert cosine_lr(0, 1, 2e-4, 1e-6) == 2e-4


class TestTrain:
    def test_loss_decreases_and_is_deterministic(self):
        sample = make_sample(16, seed=7)
        cfg = TrainConfig(epochs=30, batch=1, seed=9, lr_init=2e-3, lr_final=1e-5)
        first = train([sample], cfg)
        second = train([sample], cfg)
        assert first.loss_history == second.loss_history  # bit-identical
        assert first.loss_history[-1] < first.loss_history[0]
        assert len(first.loss_history) == 30

    def test_divergence_aborts_with_diagnostic(self):
        sample = make_sample(16, seed=8)
        cfg = TrainConfig(epochs=2, divergence_limit=1e-9)
        with pytest.raises(TrainingDiverged, match="exceeds limit"):
            train([sample], cfg)

    def test_empty_dataset_rejected(self):
        from ihdr.images import DataError

        with pytest.raises(DataError, match="non-empty"):
            train([], TrainConfig())

    def test_learned_tonenet_joint_training(self):
        sample = make_sample(16, seed=10)
        cfg = TrainConfig(epochs=5, seed=1, learned_tonenet=True, lr_init=1e-3, lr_final=1e-4)
        result = train([sample], cfg)
        assert result.tonenet is not None
        assert result.tonenet.backend == "learned"
        assert result.tonenet.param_count() > 0

    def test_config_validation(self):
        from ihdr.images import DataError

        with pytest.raises(DataError):
            TrainConfig(lr_init=1e-6, lr_final=1e-4)
        with pytest.raises(DataError):
            TrainConfig(lambda_map=-1.0)
