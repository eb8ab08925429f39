"""Central finite-difference oracle for taped gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import numcore as nc


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    """||a - b|| / max(||a||, ||b||); zero when both are below ``floor``."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    scale = max(na, nb)
    if scale < floor:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. array ``x`` (perturbed in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_gradients(build: Callable[[Sequence[nc.Tensor]], nc.Tensor], inputs: Sequence[np.ndarray],
                    h: float = 1e-3) -> float:
    """Worst relative error between taped and finite-difference gradients.

    ``build`` maps trainable tensors (float64) to a scalar loss.  Runs in float64
    so the oracle's rounding error stays far below the tolerance.
    """
    with nc.precision(np.float64):
        params = [nc.parameter(np.array(x, dtype=np.float64)) for x in inputs]
        loss = build(params)
        grads = nc.backward(loss)

        def value() -> float:
            with nc.no_grad():
                return float(build(params).data)

        worst = 0.0
        for p in params:
            analytic = grads.get(p, np.zeros_like(p.data))
            numeric = numeric_grad(value, p.data, h)
            worst = max(worst, relative_error(analytic, numeric))
    return worst
