import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from oracles import adamw_ref, cross_entropy_ref, head_loss_ref, softmax_ref
from tweetframe.models.mathops import (
    OptimizerHyper,
    OptimizerState,
    adamw_step,
    cross_entropy,
    head_loss_and_grad,
    softmax,
)
from tweetframe.models.optim import DecoupledAdamW

finite = st.floats(-50, 50, allow_nan=False)


class TestSoftmax:
    @given(st.lists(finite, min_size=3, max_size=3))
    def test_matches_reference(self, y):
        assert np.allclose(softmax(np.array(y)), softmax_ref(y), atol=1e-12, rtol=0)

    def test_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0, -1000.0]))
        assert p[0] == pytest.approx(1.0)
        assert np.isfinite(p).all()

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            softmax(np.array([0.0, np.nan, 1.0]))

    @pytest.mark.parametrize(
        "y, expected",
        [((0.0, 0.0, 0.0), (1 / 3, 1 / 3, 1 / 3)), ((math.log(2), 0.0, 0.0), (0.5, 0.25, 0.25))],
    )
    def test_worked_values(self, y, expected):
        assert np.allclose(softmax(np.array(y)), expected, atol=1e-12)

    def test_batched(self):
        y = np.array([[0.0, 1.0, 2.0], [5.0, 5.0, 5.0]])
        assert np.allclose(softmax(y).sum(axis=1), 1.0)


class TestCrossEntropy:
    def test_certain(self):
        assert cross_entropy(np.array([1.0, 0.0, 0.0]), 1) == 0.0

    def test_floor(self):
        assert cross_entropy(np.array([1.0, 0.0, 0.0]), 2) == pytest.approx(-math.log(1e-12))

    @pytest.mark.parametrize("p, t, expected", [
        ((1 / 3, 1 / 3, 1 / 3), 2, math.log(3)),
        ((0.5, 0.3, 0.2), 1, math.log(2)),
    ])
    def test_worked_values(self, p, t, expected):
        assert cross_entropy(np.array(p), t) == pytest.approx(expected, abs=1e-12)

    def test_bad_code(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([0.2, 0.3, 0.5]), 0)

    @given(st.lists(finite, min_size=3, max_size=3), st.sampled_from([1, 2, 3]))
    def test_matches_reference(self, y, t):
        p = softmax(np.array(y))
        assert cross_entropy(p, t) == pytest.approx(cross_entropy_ref(list(p), t), abs=1e-12)


class TestAdamW:
    def test_first_step_moves_by_alpha(self):
        # bias correction makes the first step exactly alpha * sign(g) (up to eps)
        h = OptimizerHyper(alpha=0.1, epsilon=1e-12)
        theta, _ = adamw_step(np.array([1.0, -2.0]), np.array([3.0, -0.5]), OptimizerState.zeros_like(np.zeros(2)), h)
        assert np.allclose(theta, [0.9, -1.9])

    def test_decay_uses_pre_update_theta(self):
        h = OptimizerHyper(alpha=0.1, weight_decay=0.5, epsilon=1e-12)
        theta, _ = adamw_step(np.array([2.0]), np.array([1.0]), OptimizerState.zeros_like(np.zeros(1)), h)
        assert theta[0] == pytest.approx(2.0 - 0.1 - 1.0)

    def test_zero_gradient_no_decay_is_identity(self):
        theta0 = np.array([0.3, -1.2, 4.0])
        theta, _ = adamw_step(theta0, np.zeros(3), OptimizerState.zeros_like(theta0), OptimizerHyper(weight_decay=0.0))
        assert np.array_equal(theta, theta0)

    def test_zero_gradient_only_decays(self):
        theta0 = np.array([0.3, -1.2, 4.0])
        h = OptimizerHyper(weight_decay=0.01)
        theta, _ = adamw_step(theta0, np.zeros(3), OptimizerState.zeros_like(theta0), h)
        assert np.allclose(theta, theta0 - 0.01 * theta0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step(np.zeros(2), np.zeros(3), OptimizerState.zeros_like(np.zeros(2)), OptimizerHyper())

    def test_bad_hyper(self):
        with pytest.raises(ValueError):
            OptimizerHyper(beta1=1.0)

    def test_trajectory_matches_reference(self):
        rng = np.random.default_rng(1)
        h = OptimizerHyper(alpha=1e-2, weight_decay=1e-3)
        theta = rng.normal(size=5)
        state = OptimizerState.zeros_like(theta)
        ref = [(float(t), 0.0, 0.0, 0) for t in theta]
        for _ in range(20):
            g = rng.normal(size=5)
            theta, state = adamw_step(theta, g, state, h)
            ref = [adamw_ref(t, float(gi), m, v, s, h.alpha, h.beta1, h.beta2, h.epsilon, h.weight_decay)
                   for (t, m, v, s), gi in zip(ref, g)]
        assert np.allclose(theta, [r[0] for r in ref], atol=1e-12, rtol=0)

    def test_torch_optimizer_agrees(self):
        rng = np.random.default_rng(2)
        h = OptimizerHyper(alpha=1e-2, weight_decay=1e-3)
        theta = rng.normal(size=4)
        p = torch.nn.Parameter(torch.tensor(theta, dtype=torch.float64))
        opt = DecoupledAdamW([p], lr=h.alpha, betas=(h.beta1, h.beta2), eps=h.epsilon, weight_decay=h.weight_decay)
        state = OptimizerState.zeros_like(theta)
        for _ in range(10):
            g = rng.normal(size=4)
            theta, state = adamw_step(theta, g, state, h)
            p.grad = torch.tensor(g, dtype=torch.float64)
            opt.step()
        assert np.allclose(p.detach().numpy(), theta, atol=1e-12)


class TestHeadGradient:
    @pytest.mark.parametrize("t", [1, 2, 3])
    def test_finite_differences(self, t):
        rng = np.random.default_rng(t)
        w, b, h = rng.normal(size=(3, 6)), rng.normal(size=3), rng.normal(size=6)
        loss, gw, gb = head_loss_and_grad(w, b, h, t)
        assert loss == pytest.approx(head_loss_ref(w.tolist(), b.tolist(), h.tolist(), t), abs=1e-12)
        eps = 1e-6
        for i in range(3):
            for j in range(6):
                wp, wm = w.copy(), w.copy()
                wp[i, j] += eps
                wm[i, j] -= eps
                num = (head_loss_and_grad(wp, b, h, t)[0] - head_loss_and_grad(wm, b, h, t)[0]) / (2 * eps)
                assert num == pytest.approx(gw[i, j], rel=1e-4, abs=1e-8)
            bp, bm = b.copy(), b.copy()
            bp[i] += eps
            bm[i] -= eps
            num = (head_loss_and_grad(w, bp, h, t)[0] - head_loss_and_grad(w, bm, h, t)[0]) / (2 * eps)
            assert num == pytest.approx(gb[i], rel=1e-4, abs=1e-8)

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(0)
        _, gw, gb = head_loss_and_grad(rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=4), 2)
        assert gb.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(gw.sum(axis=0), 0.0, atol=1e-12)
