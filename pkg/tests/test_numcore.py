import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from testembed import numcore as nc
from testembed.errors import DegenerateInputError, ParameterError, ShapeError, UsageError
from testembed.gradcheck import check_gradients

from oracles import PRIMITIVES, random_inputs


def test_matmul_examples():
    eye = nc.Tensor(np.eye(2))
    m = nc.Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(nc.matmul(eye, m).data, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(nc.matmul(nc.Tensor([[1, 0]]), nc.Tensor([[0], [5]])).data, [[0]])
    np.testing.assert_array_equal(nc.matmul(m, nc.Tensor([[5], [6]])).data, [[17], [39]])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        nc.matmul(nc.Tensor(np.ones((2, 3))), nc.Tensor(np.ones((2, 3))))


def test_tensor_is_float32_with_consistent_dims():
    t = nc.Tensor([[1, 2, 3], [4, 5, 6]])
    assert t.data.dtype == np.float32
    assert t.dims == [2, 3]
    assert math.prod(t.dims) == t.data.size


class TestConv:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(1, 7))
        out = nc.conv1d_causal(nc.Tensor(x), nc.Tensor([[[1.0]]]), 1)
        np.testing.assert_allclose(out.data, x.astype(np.float32))

    def test_current_sample_tap(self):
        out = nc.conv1d_causal(nc.Tensor([[1, 2, 3]]), nc.Tensor([[[0, 1]]]), 1)
        np.testing.assert_array_equal(out.data, [[1, 2, 3]])

    def test_dilated_sum(self):
        out = nc.conv1d_causal(nc.Tensor([[1, 1, 1, 1]]), nc.Tensor([[[1, 1]]]), 2)
        np.testing.assert_array_equal(out.data, [[1, 1, 2, 2]])

    def test_bad_dilation(self):
        with pytest.raises(ParameterError):
            nc.conv1d_causal(nc.Tensor([[1, 2]]), nc.Tensor([[[1]]]), 0)

    def test_batched_matches_unbatched(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4, 9))
        w = rng.normal(size=(5, 4, 3))
        batched = nc.conv1d_causal(nc.Tensor(x), nc.Tensor(w), 2).data
        for b in range(3):
            np.testing.assert_allclose(batched[b], nc.conv1d_causal(nc.Tensor(x[b]), nc.Tensor(w), 2).data,
                                       rtol=1e-5, atol=1e-5)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 10))
        w = rng.normal(size=(3, 2, 3))
        d = 2
        ref = np.zeros((3, 10))
        for o in range(3):
            for t in range(10):
                for c in range(2):
                    for k in range(3):
                        src = t - (2 - k) * d
                        if src >= 0:
                            ref[o, t] += w[o, c, k] * x[c, src]
        np.testing.assert_allclose(nc.conv1d_causal(nc.Tensor(x), nc.Tensor(w), d).data, ref, rtol=1e-5, atol=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), t0=st.integers(1, 15), dilation=st.integers(1, 4))
    def test_causality(self, seed, t0, dilation):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 16))
        w = rng.normal(size=(3, 2, 3))
        y = nc.conv1d_causal(nc.Tensor(x), nc.Tensor(w), dilation).data
        x2 = x.copy()
        x2[:, t0:] += rng.normal(size=(2, 16 - t0)) * 10
        y2 = nc.conv1d_causal(nc.Tensor(x2), nc.Tensor(w), dilation).data
        np.testing.assert_array_equal(y[:, :t0], y2[:, :t0])


def test_gelu_values():
    assert float(nc.gelu(nc.Tensor(0.0)).data) == 0.0
    assert abs(float(nc.gelu(nc.Tensor(10.0)).data) - 10.0) < 1e-6
    # -1 * Phi(-1), Phi(-1) = 0.158655
    assert abs(float(nc.gelu(nc.Tensor(-1.0)).data) + 0.15866) < 1e-5


def test_cosine_examples():
    assert float(nc.cosine_sim(nc.Tensor([1, 0]), nc.Tensor([0, 1])).data) == 0.0
    assert abs(float(nc.cosine_sim(nc.Tensor([2, 0]), nc.Tensor([5, 0])).data) - 1.0) < 1e-7
    assert abs(float(nc.cosine_sim(nc.Tensor([1, 1]), nc.Tensor([1, 0])).data) - 0.70711) < 1e-5


def test_cosine_zero_norm():
    with pytest.raises(DegenerateInputError):
        nc.cosine_sim(nc.Tensor([0, 0]), nc.Tensor([1, 0]))


class TestBackward:
    def test_sum_gives_ones(self):
        w = nc.parameter(np.random.default_rng(0).normal(size=(3, 4)))
        g = nc.backward(nc.tsum(w))
        np.testing.assert_array_equal(g[w], np.ones((3, 4)))

    def test_constant_cosine_gives_zero(self):
        w = nc.parameter(np.random.default_rng(1).normal(size=6))
        g = nc.backward(nc.cosine_sim(w, w))
        np.testing.assert_allclose(g[w], 0.0, atol=1e-6)

    def test_non_scalar_root(self):
        w = nc.parameter(np.ones(3))
        with pytest.raises(UsageError):
            nc.backward(w * 2)
        nc.Tape.clear()

    def test_frozen_tensors_get_no_entry(self):
        w = nc.parameter(np.ones(3))
        frozen = nc.Tensor(np.full(3, 2.0))
        g = nc.backward(nc.tsum(w * frozen))
        assert set(g) == {w}
        np.testing.assert_array_equal(g[w], [2, 2, 2])

    def test_tape_cleared_after_backward(self):
        w = nc.parameter(np.ones(3))
        nc.backward(nc.tsum(w * w))
        assert nc.Tape.records() == []

    def test_no_grad_records_nothing(self):
        w = nc.parameter(np.ones(3))
        with nc.no_grad():
            y = nc.tsum(w * w)
        assert not y.requires_grad
        assert nc.Tape.records() == []

    def test_shared_subgraph_accumulates(self):
        x = nc.parameter(2.0)
        y = nc.parameter(-4.0)
        q = (x + y) * (x + 1)
        g = nc.backward(q)
        assert g[x].item() == 1.0
        assert g[y].item() == 3.0


def test_large_reduction_accumulates_in_float64():
    x = nc.Tensor(np.full(20_000, 0.1, dtype=np.float32))
    exact = 20_000 * float(np.float32(0.1))
    assert abs(float(nc.tsum(x).data) - exact) <= 1e-6 * exact


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(7)
        x = nc.Tensor(rng.normal(size=(2, 3, 12)))
        w = nc.Tensor(rng.normal(size=(4, 3, 3)))
        return nc.gelu(nc.conv1d_causal(x, w, 2)).data.tobytes()

    assert run() == run()


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_difference(name, seed):
    build, shapes = PRIMITIVES[name]
    err = check_gradients(build, random_inputs(seed, shapes))
    assert err <= 1e-3, f"{name} seed {seed}: relative error {err:.2e}"
