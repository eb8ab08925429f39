import math

import numpy as np
import pytest

from testembed import numcore as nc
from testembed.contrast import (
    NegativeQueue, Temperatures, feature_loss, info_nce, instance_loss, queue_push, text_align_loss,
    text_alignment,
)
from testembed.errors import ParameterError, ShapeError, UsageError
from testembed.gradcheck import check_gradients

from oracles import loss_cases


class TestInfoNCE:
    def test_one_negative_symmetric(self):
        assert abs(float(info_nce([0.3], [[0.3]]).data) - math.log(2)) < 1e-6

    @pytest.mark.parametrize("N", [1, 5, 64])
    def test_uniform_logits(self, N):
        assert abs(float(info_nce([0.0], np.zeros((1, N))).data) - math.log(N + 1)) < 1e-5

    def test_separated_logits(self):
        with nc.precision(np.float64):
            assert float(info_nce([10.0], [[-10.0]]).data) <= 1e-8


class TestInstanceLoss:
    @pytest.mark.parametrize("N", [1, 7, 100])
    def test_uniform_logits_ln_n_plus_one(self, N):
        # anchor orthogonal to the positive and to every negative -> all logits 0
        M = 4
        e = np.eye(M)[0]
        e_pos = np.eye(M)[1]
        negs = np.random.default_rng(N).normal(size=(N, M))
        negs[:, 0] = 0.0
        loss = instance_loss(e, e_pos, negs, tau_i=0.1)
        assert abs(float(loss.data) - math.log(N + 1)) < 1e-5

    def test_aligned_positive_opposite_negative(self):
        # cosine +1 vs -1 at tau 0.1 gives logits +10 / -10
        e = np.array([1.0, 2.0, -1.0])
        with nc.precision(np.float64):
            loss = instance_loss(e, e * 3.0, -e[None], tau_i=0.1)
        assert float(loss.data) <= 1e-8

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            loss = instance_loss(rng.normal(size=(4, 5)), rng.normal(size=(4, 5)), rng.normal(size=(9, 5)), 0.2)
            assert float(loss.data) >= 0.0

    def test_empty_queue(self):
        with pytest.raises(UsageError):
            instance_loss(np.ones(3), np.ones(3), NegativeQueue(4), 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            instance_loss(np.ones(3), np.ones(3), np.ones((2, 4)), 0.1)


class TestFeatureLoss:
    def test_degenerate_single_column(self):
        m = np.arange(1.0, 6.0)[:, None]
        assert abs(float(feature_loss(m, m, m, 0.5).data) - math.log(2)) < 1e-5

    def test_row_permutation_invariant(self):
        rng = np.random.default_rng(0)
        w, s, n = (rng.normal(size=(6, 4)) for _ in range(3))
        perm = rng.permutation(6)
        a = float(feature_loss(w, s, n, 0.5).data)
        b = float(feature_loss(w[perm], s[perm], n[perm], 0.5).data)
        assert abs(a - b) < 1e-5

    def test_brute_force_formula(self):
        s = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])  # orthogonal columns
        w = s.copy()
        n = -s
        tau = 1.0

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        expected = 0.0
        for i in range(2):
            num = math.exp(cos(s[:, i], w[:, i]) / tau)
            den = sum(math.exp(cos(s[:, i], s[:, j]) / tau) + math.exp(cos(s[:, i], n[:, j]) / tau)
                      for j in range(2))
            expected -= math.log(num / den)
        assert abs(float(feature_loss(w, s, n, tau).data) - expected) < 1e-5

    def test_needs_two_rows(self):
        with pytest.raises(UsageError):
            feature_loss(np.ones((1, 3)), np.ones((1, 3)), np.ones((1, 3)), 0.5)


class TestTextAlignment:
    def test_self_prototype(self):
        tp = np.array([[0.6, 0.8, 0.0]])
        assert abs(float(text_alignment(tp[0], tp).data) + 1.0) < 1e-6

    def test_scale_invariant(self):
        rng = np.random.default_rng(0)
        tp = rng.normal(size=(3, 5))
        e = rng.normal(size=5)
        assert abs(float(text_alignment(e, tp).data) - float(text_alignment(5 * e, tp).data)) < 1e-6

    def test_two_orthonormal(self):
        tp = np.eye(4)[:2]
        assert abs(float(text_alignment(np.eye(4)[0], tp).data) + 0.5) < 1e-6

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            text_alignment(np.ones(3), np.eye(4))

    def test_weights(self):
        rng = np.random.default_rng(1)
        e, p, n = (rng.normal(size=(4, 6)) for _ in range(3))
        tp = np.linalg.qr(rng.normal(size=(6, 3)))[0].T
        only_align = float(text_align_loss(e, p, n, tp, 0.5, 1.0, 0.0).data)
        assert abs(only_align - float(text_alignment(e, tp).data)) < 1e-6
        only_fea = float(text_align_loss(e, p, n, tp, 0.5, 0.0, 1.0).data)
        assert abs(only_fea - float(feature_loss(p @ tp.T, e @ tp.T, n @ tp.T, 0.5).data)) < 1e-4


class TestQueue:
    def test_fifo_eviction(self):
        q = NegativeQueue(4)
        q.push(np.array([[1.0], [2.0]]))
        q.push(np.array([[3.0], [4.0], [5.0]]))
        assert len(q) == 4
        np.testing.assert_array_equal(q.as_array()[:, 0], [2, 3, 4, 5])

    def test_push_to_empty(self):
        q = queue_push(NegativeQueue(10), np.ones((3, 2)))
        assert len(q) == 3

    def test_last_q_in_order(self):
        Q = 5
        q = NegativeQueue(Q)
        for i in range(Q + 1):
            q.push(np.array([float(i)]))
        np.testing.assert_array_equal(q.as_array()[:, 0], np.arange(1, Q + 1))

    def test_width_check(self):
        q = NegativeQueue(3).push(np.ones((1, 2)))
        with pytest.raises(ShapeError):
            q.push(np.ones((1, 3)))

    def test_bad_capacity_and_temperature(self):
        with pytest.raises(ParameterError):
            NegativeQueue(0)
        with pytest.raises(ParameterError):
            Temperatures(0.0, 0.5)


@pytest.mark.parametrize("name", ["instance_loss", "feature_loss", "text_align_loss"])
@pytest.mark.parametrize("seed", range(20))
def test_loss_gradients(name, seed):
    build, inputs = loss_cases(seed)[name]
    err = check_gradients(build, inputs)
    assert err <= 1e-3, f"{name} seed {seed}: relative error {err:.2e}"
