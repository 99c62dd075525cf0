"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, CorruptFileError


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def save(self, path) -> None:
        arrays = {"hyper": np.array([self.lr, self.beta1, self.beta2, self.eps]), "t": np.array(self.t)}
        for k in self.m:
            arrays[f"m/{k}"] = self.m[k]
            arrays[f"v/{k}"] = self.v[k]
        path = os.fspath(path)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".npz")
        os.close(fd)
        try:
            np.savez(tmp, **arrays)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    @classmethod
    def load(cls, path) -> "AdamState":
        try:
            with np.load(path) as z:
                lr, b1, b2, eps = z["hyper"].tolist()
                state = cls(lr, b1, b2, eps, int(z["t"]))
                for key in z.files:
                    if key.startswith("m/"):
                        state.m[key[2:]] = z[key]
                    elif key.startswith("v/"):
                        state.v[key[2:]] = z[key]
        except (OSError, ValueError, KeyError) as exc:
            if isinstance(exc, FileNotFoundError):
                raise
            raise CorruptFileError(f"unreadable optimizer state {path}: {exc}") from exc
        return state


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Update ``params`` in place and return them."""
    for key, g in grads.items():
        if key not in params or params[key].shape != g.shape:
            raise ContractError(f"gradient {key} does not match any parameter shape")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for key, g in grads.items():
        p = params[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m, v = state.m[key], state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)
    return params
