"""Seeded synthetic suites.

``cls3``
    Three waveform classes, 0 = sine, 1 = square, 2 = sawtooth.  Each series
    has a random period in [16, 40] steps, random phase, amplitude drawn from
    [0.5, 2.0], and additive Gaussian noise (sigma 0.15).

``ar2``
    Univariate AR(2) processes ``x_t = a1 x_{t-1} + a2 x_{t-2} + eps`` with
    per-series ``a1 ~ U(0.4, 0.8)``, ``a2 ~ U(-0.6, -0.4)`` and unit noise,
    after a 100-step burn-in.  The forecasting target is the next value.
"""

from __future__ import annotations

import numpy as np

from .data import TimeSeries

SUITES = ("cls3", "ar2")
CLASS_NAMES = ("sine", "square", "sawtooth")


def waveform(kind: int, t: np.ndarray, period: float, phase: float) -> np.ndarray:
    u = (t / period + phase / (2 * np.pi)) % 1.0
    if kind == 0:
        return np.sin(2 * np.pi * u)
    if kind == 1:
        return np.where(u < 0.5, 1.0, -1.0)
    if kind == 2:
        return 2.0 * u - 1.0
    raise ValueError(f"unknown waveform class {kind}")


def make_cls3(n_per_class: int = 125, length: int = 128, seed: int = 0, noise: float = 0.15) -> list[TimeSeries]:
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.repeat(np.arange(3), n_per_class))
    t = np.arange(length, dtype=np.float64)
    out = []
    for y in labels:
        period = rng.uniform(16, 40)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 2.0)
        x = amp * waveform(int(y), t, period, phase) + rng.normal(0, noise, length)
        out.append(TimeSeries(x[None].astype(np.float32), label=int(y)))
    return out


def make_ar2(n: int = 375, length: int = 128, seed: int = 0, horizon: int = 1, burn_in: int = 100) -> list[TimeSeries]:
    rng = np.random.default_rng(seed)
    out = []
    total = burn_in + length + horizon
    for _ in range(n):
        a1 = rng.uniform(0.4, 0.8)
        a2 = rng.uniform(-0.6, -0.4)
        eps = rng.normal(size=total)
        x = np.zeros(total)
        for i in range(2, total):
            x[i] = a1 * x[i - 1] + a2 * x[i - 2] + eps[i]
        x = x[burn_in:]
        out.append(TimeSeries(x[None, :length].astype(np.float32), target=x[None, length:].astype(np.float32)))
    return out


def generate(suite: str, seed: int = 0) -> list[TimeSeries]:
    if suite == "cls3":
        return make_cls3(seed=seed)
    if suite == "ar2":
        return make_ar2(seed=seed)
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
