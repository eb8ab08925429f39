import numpy as np
import pytest

from testembed import numcore as nc
from testembed.data import TsToken
from testembed.encoder import (
    Decoder, Encoder, EncoderConfig, ProjectionHead, autoencode_loss, fit_window, momentum_update,
)
from testembed.errors import ParameterError, ShapeError
from testembed.gradcheck import check_gradients

from oracles import encoder_case

SMALL = EncoderConfig(num_blocks=3, hidden_channels=8, kernel=3, embed_dim=6)


def tok(values):
    values = np.asarray(values, dtype=np.float32)
    return TsToken(values, 0, 0, values.shape[1])


def test_identical_tokens_identical_embeddings():
    enc = Encoder(SMALL, 2, seed=0)
    x = np.random.default_rng(0).normal(size=(2, 20))
    assert enc.encode(tok(x)).data.tobytes() == enc.encode(tok(x.copy())).data.tobytes()


@pytest.mark.parametrize("L", [4, 8, 57])
def test_any_length_gives_M_outputs(L):
    enc = Encoder(SMALL, 1, seed=1)
    e = enc.encode(tok(np.random.default_rng(L).normal(size=(1, L))))
    assert e.shape == (SMALL.embed_dim,)


def test_zero_convs_give_output_bias():
    enc = Encoder(SMALL, 1, seed=2)
    for name, p in enc.params.items():
        if ".conv" in name or name.startswith("enc.out"):
            p.data = np.zeros_like(p.data)
    enc.params["enc.out.b"].data = np.arange(6, dtype=np.float32)
    for seed in range(3):
        x = np.random.default_rng(seed).normal(size=(1, 15))
        np.testing.assert_array_equal(enc.encode(tok(x)).data, np.arange(6))


def test_short_token_rejected():
    with pytest.raises(ShapeError):
        Encoder(SMALL, 1).encode(tok(np.ones((1, 3))))


def test_batch_matches_single_in_eval_mode():
    enc = Encoder(SMALL, 1, seed=3)
    x = np.random.default_rng(0).normal(size=(4, 1, 12))
    batch = enc(x).data
    for i in range(4):
        np.testing.assert_allclose(batch[i], enc.encode(tok(x[i])).data, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("seed", range(100))
def test_stack_causality(seed):
    enc = Encoder(SMALL, 2, seed=seed % 5)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, 2, 24))
    t0 = int(rng.integers(1, 24))
    y = enc.sequence(x).data
    x2 = x.copy()
    x2[:, :, t0:] = rng.normal(size=(1, 2, 24 - t0)) * 5
    np.testing.assert_array_equal(enc.sequence(x2).data[:, :, :t0], y[:, :, :t0])


def test_batchnorm_running_stats():
    enc = Encoder(EncoderConfig(1, 4, 3, 3), 1, seed=0)
    x = np.random.default_rng(0).normal(size=(5, 1, 10))
    before = enc.buffers["enc.block0.bn.mean"].copy()
    enc(x, training=True, update_stats=False)
    np.testing.assert_array_equal(enc.buffers["enc.block0.bn.mean"], before)
    enc(x, training=True)
    assert not np.array_equal(enc.buffers["enc.block0.bn.mean"], before)


class TestMomentum:
    def setup_method(self):
        self.q = Encoder(SMALL, 1, seed=0)
        self.k = Encoder(SMALL, 1, seed=1)

    def test_m_one_keeps_key(self):
        before = {n: p.data.copy() for n, p in self.k.params.items()}
        momentum_update(self.q, self.k, 1.0)
        for n, p in self.k.params.items():
            np.testing.assert_array_equal(p.data, before[n])

    def test_m_zero_copies_query(self):
        momentum_update(self.q, self.k, 0.0)
        for n, p in self.k.params.items():
            np.testing.assert_array_equal(p.data, self.q.params[n].data)

    def test_half(self):
        for p in self.q.params.values():
            p.data = np.full_like(p.data, 4.0)
        for p in self.k.params.values():
            p.data = np.full_like(p.data, 2.0)
        momentum_update(self.q, self.k, 0.5)
        assert all(np.all(p.data == 3.0) for p in self.k.params.values())

    def test_bad_momentum_and_mismatch(self):
        with pytest.raises(ParameterError):
            momentum_update(self.q, self.k, 1.5)
        with pytest.raises(ShapeError):
            momentum_update(self.q, Encoder(EncoderConfig(2, 8, 3, 6), 1), 0.5)


class TestAutoencode:
    def test_perfect_reconstruction(self):
        dec = Decoder(3, 1, 4)
        dec.w.data = np.zeros_like(dec.w.data)
        dec.b.data = np.array([1, 2, 3, 4], np.float32)
        assert float(autoencode_loss(tok([[1, 2, 3, 4]]), np.ones(3), dec).data) == 0.0

    def test_zero_decoder_ones(self):
        dec = Decoder(3, 1, 7)
        dec.w.data = np.zeros_like(dec.w.data)
        assert float(autoencode_loss(tok(np.ones((1, 7))), np.ones(3), dec).data) == 1.0

    def test_hand_value(self):
        dec = Decoder(2, 1, 2)
        dec.w.data = np.zeros_like(dec.w.data)
        assert float(autoencode_loss(np.array([[1.0, 2.0]]), np.ones(2), dec).data) == 2.5

    def test_fit_window(self):
        np.testing.assert_array_equal(fit_window(np.arange(5.0)[None], 3), [[2, 3, 4]])
        np.testing.assert_array_equal(fit_window(np.arange(2.0)[None], 4), [[0, 0, 0, 1]])


def test_projection_head_shape():
    head = ProjectionHead(6)
    assert head(np.ones((3, 6))).shape == (3, 6)


@pytest.mark.parametrize("seed", range(20))
def test_encoder_loss_gradient(seed):
    err = check_gradients(*encoder_case(seed))
    assert err <= 1e-3, f"relative error {err:.2e}"
