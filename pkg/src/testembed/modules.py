"""Named parameter bundles with container-compatible state dicts."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ShapeError
from .numcore import Tensor, parameter


class ParamBundle:
    """Ordered collection of named trainable tensors plus non-trainable buffers."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, data) -> Tensor:
        t = parameter(np.asarray(data, dtype=np.float32), name=name)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.data for k, v in self.params.items()}
        out.update(self.buffers)
        return out

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in state:
                raise ShapeError(f"missing record {k!r}")
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ShapeError(f"record {k!r} has shape {arr.shape}, expected {t.shape}")
            t.data = arr.astype(t.data.dtype)
        for k, b in self.buffers.items():
            if k not in state:
                raise ShapeError(f"missing record {k!r}")
            arr = np.asarray(state[k])
            if arr.shape != b.shape:
                raise ShapeError(f"record {k!r} has shape {arr.shape}, expected {b.shape}")
            self.buffers[k] = arr.astype(np.float32)

    def freeze(self) -> None:
        for t in self.params.values():
            t.trainable = False
            t.requires_grad = False

    def unfreeze(self) -> None:
        for t in self.params.values():
            t.trainable = True
            t.requires_grad = True
