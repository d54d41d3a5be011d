import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miracle.errors import MiracleError
from miracle.losses import (FocalParams, batch_objective, focal_batch, focal_loss,
                            focal_loss_from_logit, focal_loss_grad)

DEFAULTS = FocalParams()


class TestFocalLoss:
    def test_confident_correct_goes_to_zero(self):
        assert focal_loss(1.0 - 1e-9, 1, DEFAULTS) < 1e-20

    def test_hand_value(self):
        # 0.8 * 0.5^4 * (-ln 0.5)
        assert focal_loss(0.5, 1, DEFAULTS) == pytest.approx(0.0346574, abs=1e-6)

    def test_gamma_zero_is_weighted_bce(self):
        params = FocalParams(alpha=0.8, gamma=0.0)
        for p in (0.1, 0.4, 0.9):
            assert focal_loss(p, 1, params) == pytest.approx(0.8 * -np.log(p))
            assert focal_loss(p, 0, params) == pytest.approx(0.2 * -np.log(1 - p))

    def test_nonbinary_label_rejected(self):
        with pytest.raises(MiracleError):
            focal_loss(0.5, 2, DEFAULTS)

    def test_strictly_decreasing_in_pt(self):
        ps = np.linspace(0.05, 0.95, 30)
        losses = [focal_loss(p, 1, DEFAULTS) for p in ps]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = float(rng.uniform(1e-6, 1 - 1e-6))
            y = int(rng.integers(0, 2))
            assert focal_loss(p, y, DEFAULTS) >= 0.0


class TestFocalGrad:
    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(42)
        h = 1e-6
        for _ in range(1000):
            logit = float(rng.uniform(-6, 6))
            y = int(rng.integers(0, 2))
            params = FocalParams(alpha=float(rng.uniform(0.05, 0.95)),
                                 gamma=float(rng.choice([0.0, 1.0, 2.0, 4.0])))
            an = focal_loss_grad(logit, y, params)
            fd = (focal_loss_from_logit(logit + h, y, params)
                  - focal_loss_from_logit(logit - h, y, params)) / (2 * h)
            assert an == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_saturated_correct_prediction(self):
        assert abs(focal_loss_grad(30.0, 1, DEFAULTS)) < 1e-10

    def test_gamma_zero_reduces_to_scaled_bce_grad(self):
        params = FocalParams(alpha=0.5, gamma=0.0)
        for logit in (-2.0, 0.3, 1.7):
            p = 1.0 / (1.0 + np.exp(-logit))
            for y in (0, 1):
                assert focal_loss_grad(logit, y, params) == pytest.approx(
                    0.5 * (p - y), rel=1e-9)


class TestBatchObjective:
    def test_identical_samples_no_kl(self):
        val = batch_objective([0.3] * 4, [1] * 4, DEFAULTS, total_kl=5.0, kl_weight=0.0)
        assert val == pytest.approx(focal_loss(0.3, 1, DEFAULTS))

    def test_kl_arithmetic(self):
        val = batch_objective([1.0 - 1e-9], [1], DEFAULTS, total_kl=2e6, kl_weight=1e-6)
        assert val == pytest.approx(2.0, abs=1e-6)

    def test_matches_hand_summed_loop(self):
        rng = np.random.default_rng(1)
        ps = rng.uniform(0.05, 0.95, 5)
        ys = rng.integers(0, 2, 5)
        expected = sum(focal_loss(p, int(y), DEFAULTS) for p, y in zip(ps, ys)) / 5 \
            + 1e-6 * 123.0
        assert batch_objective(ps, ys, DEFAULTS, 123.0, 1e-6) == pytest.approx(
            expected, abs=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(MiracleError):
            batch_objective([], [], DEFAULTS, 0.0, 0.0)


def test_focal_batch_matches_scalar_path():
    rng = np.random.default_rng(2)
    logits = rng.uniform(-4, 4, 50)
    ys = rng.integers(0, 2, 50)
    losses, grads = focal_batch(logits, ys, DEFAULTS)
    for i in range(50):
        assert losses[i] == pytest.approx(
            focal_loss_from_logit(logits[i], int(ys[i]), DEFAULTS), rel=1e-12)
        assert grads[i] == pytest.approx(
            focal_loss_grad(logits[i], int(ys[i]), DEFAULTS), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-8, max_value=8), st.integers(min_value=0, max_value=1))
def test_loss_nonnegative_property(logit, y):
    assert focal_loss_from_logit(logit, y, DEFAULTS) >= 0.0
