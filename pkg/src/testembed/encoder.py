"""Dilated causal TCN encoder, projection head, decoder and momentum update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .data import TsToken
from .errors import ParameterError, ShapeError
from .modules import ParamBundle
from .numcore import Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class EncoderConfig:
    num_blocks: int = 10
    hidden_channels: int = 64
    kernel: int = 3
    embed_dim: int = 64
    momentum: float = 0.99

    def __post_init__(self):
        if self.num_blocks < 0 or self.hidden_channels < 1 or self.kernel < 1 or self.embed_dim < 1:
            raise ParameterError("encoder sizes must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise ParameterError("momentum must lie in [0, 1]")

    def dilation(self, block: int) -> int:
        return 2**block


def _kaiming(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)


class Encoder(ParamBundle):
    """Input projection, residual dilated blocks, output conv, last-step readout."""

    def __init__(self, cfg: EncoderConfig, in_channels: int, seed: int = 0, prefix: str = "enc"):
        super().__init__()
        self.cfg = cfg
        self.in_channels = in_channels
        self.prefix = prefix
        rng = np.random.default_rng(seed)
        H, K, M = cfg.hidden_channels, cfg.kernel, cfg.embed_dim
        p = prefix
        self.add_param(f"{p}.inproj.w", _kaiming(rng, (H, in_channels), in_channels))
        self.add_param(f"{p}.inproj.b", np.zeros(H))
        for i in range(cfg.num_blocks):
            b = f"{p}.block{i}"
            self.add_param(f"{b}.conv1.w", _kaiming(rng, (H, H, K), H * K))
            self.add_param(f"{b}.conv1.b", np.zeros(H))
            self.add_param(f"{b}.bn.gamma", np.ones(H))
            self.add_param(f"{b}.bn.beta", np.zeros(H))
            self.buffers[f"{b}.bn.mean"] = np.zeros(H, np.float32)
            self.buffers[f"{b}.bn.var"] = np.ones(H, np.float32)
            self.add_param(f"{b}.conv2.w", _kaiming(rng, (H, H, K), H * K))
            self.add_param(f"{b}.conv2.b", np.zeros(H))
        self.add_param(f"{p}.out.w", _kaiming(rng, (M, H, K), H * K))
        self.add_param(f"{p}.out.b", np.zeros(M))

    def _bn(self, z: Tensor, name: str, training: bool, update_stats: bool) -> Tensor:
        P = self.params
        gamma = nc.reshape(P[f"{name}.gamma"], (1, -1, 1))
        beta = nc.reshape(P[f"{name}.beta"], (1, -1, 1))
        if training:
            mu = nc.mean(z, axis=(0, 2), keepdims=True)
            zc = z - mu
            var = nc.mean(zc * zc, axis=(0, 2), keepdims=True)
            if update_stats:
                n = z.shape[0] * z.shape[2]
                unbiased = var.data.reshape(-1) * (n / max(n - 1, 1))
                self.buffers[f"{name}.mean"] = ((1 - BN_MOMENTUM) * self.buffers[f"{name}.mean"]
                                                + BN_MOMENTUM * mu.data.reshape(-1)).astype(np.float32)
                self.buffers[f"{name}.var"] = ((1 - BN_MOMENTUM) * self.buffers[f"{name}.var"]
                                               + BN_MOMENTUM * unbiased).astype(np.float32)
            return zc / nc.sqrt(var + BN_EPS) * gamma + beta
        rm = self.buffers[f"{name}.mean"].reshape(1, -1, 1)
        rv = self.buffers[f"{name}.var"].reshape(1, -1, 1)
        return (z - rm) * (1.0 / np.sqrt(rv + BN_EPS)).astype(z.data.dtype) * gamma + beta

    def sequence(self, x, training: bool = False, update_stats: bool = True) -> Tensor:
        """Per-step output [B, M, L] for a batch ``x`` of shape [B, D, L]."""
        x = nc.as_tensor(x)
        if x.ndim == 2:
            x = nc.reshape(x, (1,) + x.shape)
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"encoder built for {self.in_channels} channels, got input {x.shape}")
        if x.shape[2] < 4:
            raise ShapeError("token length must be at least 4")
        P, p, cfg = self.params, self.prefix, self.cfg
        h = nc.matmul(P[f"{p}.inproj.w"], x) + nc.reshape(P[f"{p}.inproj.b"], (1, -1, 1))
        for i in range(cfg.num_blocks):
            b = f"{p}.block{i}"
            d = cfg.dilation(i)
            z = nc.conv1d_causal(nc.gelu(h), P[f"{b}.conv1.w"], d) + nc.reshape(P[f"{b}.conv1.b"], (1, -1, 1))
            z = self._bn(z, f"{b}.bn", training, update_stats)
            z = nc.conv1d_causal(nc.gelu(z), P[f"{b}.conv2.w"], d) + nc.reshape(P[f"{b}.conv2.b"], (1, -1, 1))
            h = h + z
        z = nc.conv1d_causal(nc.gelu(h), P[f"{p}.out.w"], cfg.dilation(cfg.num_blocks))
        return z + nc.reshape(P[f"{p}.out.b"], (1, -1, 1))

    def __call__(self, x, training: bool = False, update_stats: bool = True) -> Tensor:
        """Embeddings [B, M] read out at the last time step."""
        return self.sequence(x, training, update_stats)[:, :, -1]

    def encode(self, s: TsToken) -> Tensor:
        if s.values.shape[0] != self.in_channels:
            raise ShapeError(f"token has {s.values.shape[0]} channels, encoder expects {self.in_channels}")
        return self(s.values[None], training=False)[0]

    def copy(self) -> "Encoder":
        twin = Encoder.__new__(Encoder)
        ParamBundle.__init__(twin)
        twin.cfg, twin.in_channels, twin.prefix = self.cfg, self.in_channels, self.prefix
        for k, t in self.params.items():
            twin.add_param(k, t.data.copy())
        twin.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return twin


class ProjectionHead(ParamBundle):
    """One-layer MLP (affine then GELU) used by the instance-wise contrast."""

    def __init__(self, dim: int, seed: int = 0, prefix: str = "proj"):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.w = self.add_param(f"{prefix}.w", _kaiming(rng, (dim, dim), dim))
        self.b = self.add_param(f"{prefix}.b", np.zeros(dim))

    def __call__(self, e) -> Tensor:
        return nc.gelu(nc.linear(e, self.w, self.b))


class Decoder(ParamBundle):
    """Affine map from an M-vector to a [D, L_out] window."""

    def __init__(self, embed_dim: int, channels: int, out_len: int, seed: int = 0, prefix: str = "dec"):
        super().__init__()
        self.channels, self.out_len = channels, out_len
        rng = np.random.default_rng(seed)
        n = channels * out_len
        self.w = self.add_param(f"{prefix}.w", rng.normal(0, 1 / np.sqrt(embed_dim), (n, embed_dim)))
        self.b = self.add_param(f"{prefix}.b", np.zeros(n))

    def __call__(self, e) -> Tensor:
        e = nc.as_tensor(e)
        single = e.ndim == 1
        if single:
            e = nc.reshape(e, (1, -1))
        y = nc.reshape(nc.linear(e, self.w, self.b), (e.shape[0], self.channels, self.out_len))
        return y[0] if single else y


def momentum_update(query: Encoder, key: Encoder, m: float) -> Encoder:
    """EMA step theta_k <- m * theta_k + (1 - m) * theta_q, in place on ``key``."""
    if not 0.0 <= m <= 1.0:
        raise ParameterError("momentum must lie in [0, 1]")
    if query.params.keys() != key.params.keys():
        raise ShapeError("query and key encoders have different architectures")
    for name, q in query.params.items():
        k = key.params[name]
        if k.shape != q.shape:
            raise ShapeError(f"parameter {name!r} shape differs: {k.shape} vs {q.shape}")
        k.data = (m * k.data + (1.0 - m) * q.data).astype(k.data.dtype)
    return key


def fit_window(values: np.ndarray, out_len: int) -> np.ndarray:
    """Keep the last ``out_len`` steps of [..., L], left-padding zeros if shorter."""
    L = values.shape[-1]
    if L >= out_len:
        return values[..., L - out_len :]
    pad = [(0, 0)] * (values.ndim - 1) + [(out_len - L, 0)]
    return np.pad(values, pad)


def autoencode_loss(s, e, decoder: Decoder) -> Tensor:
    """Mean squared reconstruction error between a token window and ``decoder(e)``."""
    values = s.values if isinstance(s, TsToken) else np.asarray(s)
    target = fit_window(values, decoder.out_len)
    return nc.mse(decoder(e), target)
