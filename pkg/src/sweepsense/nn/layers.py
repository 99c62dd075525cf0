"""Layer set of the sensing CNN.

Activations and parameters are stored in the parameter dtype (float32 in
production, float64 for gradient checks). Every matrix product accumulates in
float64 and the result is rounded back, so a row's output does not depend on
which other rows share its batch.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError

ACTIVATIONS = ("linear", "relu")


def _check_activation(name: str) -> str:
    if name not in ACTIVATIONS:
        raise ContractError(f"unknown activation {name!r}")
    return name


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def config(self) -> dict:
        return {}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def init_params(self, in_shape, rng: np.random.Generator, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool, rng=None):
        """Return ``(y, cache)``; ``cache`` is only needed in train mode."""
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        raise NotImplementedError


class Conv1D(Layer):
    """1D cross-correlation over ``(batch, channels, length)`` inputs."""

    kind = "Conv1D"

    def __init__(self, out_channels: int, kernel: int, activation: str = "relu", padding: str = "same"):
        super().__init__()
        if out_channels < 1 or kernel < 1:
            raise ContractError("Conv1D needs positive out_channels and kernel")
        if padding not in ("same", "valid"):
            raise ContractError(f"unknown padding {padding!r}")
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.activation = _check_activation(activation)
        self.padding = padding

    def config(self):
        return {
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "activation": self.activation,
            "padding": self.padding,
        }

    def _pads(self) -> tuple[int, int]:
        if self.padding == "valid":
            return 0, 0
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def output_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ContractError(f"Conv1D expects (channels, length), got {in_shape}")
        c, length = in_shape
        left, right = self._pads()
        out_len = length + left + right - self.kernel + 1
        if out_len < 1:
            raise ContractError(f"kernel {self.kernel} longer than input length {length}")
        return self.out_channels, out_len

    def init_params(self, in_shape, rng, dtype):
        fan_in = in_shape[0] * self.kernel
        limit = np.sqrt(6.0 / fan_in)
        self.params = {
            "W": rng.uniform(-limit, limit, (self.out_channels, in_shape[0], self.kernel)).astype(dtype),
            "b": np.zeros(self.out_channels, dtype=dtype),
        }

    def _columns(self, x):
        left, right = self._pads()
        if left or right:
            x = np.pad(x, ((0, 0), (0, 0), (left, right)))
        win = sliding_window_view(x, self.kernel, axis=2)  # (B, C, Lout, K)
        b, c, out_len, k = win.shape
        return win.transpose(0, 2, 1, 3).reshape(b * out_len, c * k).astype(np.float64), out_len

    def forward(self, x, train, rng=None):
        w, bias = self.params["W"], self.params["b"]
        cols, out_len = self._columns(x)
        z = cols @ w.reshape(self.out_channels, -1).T.astype(np.float64)
        z += bias
        z = z.astype(w.dtype).reshape(x.shape[0], out_len, self.out_channels).transpose(0, 2, 1)
        y = np.maximum(z, 0) if self.activation == "relu" else z
        y = np.ascontiguousarray(y)
        cache = (cols, x.shape, z) if train else None
        return y, cache

    def backward(self, dy, cache):
        cols, in_shape, z = cache
        w = self.params["W"]
        if self.activation == "relu":
            dy = dy * (z > 0)
        b, f, out_len = dy.shape
        dz = dy.transpose(0, 2, 1).reshape(b * out_len, f).astype(np.float64)
        grads = {
            "W": (dz.T @ cols).reshape(w.shape).astype(w.dtype),
            "b": dz.sum(axis=0).astype(w.dtype),
        }
        dcols = (dz @ w.reshape(f, -1).astype(np.float64)).reshape(b, out_len, in_shape[1], self.kernel)
        left, right = self._pads()
        dxp = np.zeros((b, in_shape[1], in_shape[2] + left + right))
        for k in range(self.kernel):
            dxp[:, :, k:k + out_len] += dcols[:, :, :, k].transpose(0, 2, 1)
        dx = dxp[:, :, left:left + in_shape[2]]
        return dx.astype(w.dtype), grads


class MaxPool1D(Layer):
    kind = "MaxPool1D"

    def __init__(self, window: int, stride: int | None = None):
        super().__init__()
        self.window = int(window)
        self.stride = int(stride if stride is not None else window)
        if self.window < 1 or self.stride < 1:
            raise ContractError("MaxPool1D needs positive window and stride")

    def config(self):
        return {"window": self.window, "stride": self.stride}

    def output_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ContractError(f"MaxPool1D expects (channels, length), got {in_shape}")
        c, length = in_shape
        if length < self.window:
            raise ContractError(f"pool window {self.window} longer than input length {length}")
        return c, (length - self.window) // self.stride + 1

    def forward(self, x, train, rng=None):
        win = sliding_window_view(x, self.window, axis=2)[:, :, ::self.stride]
        idx = win.argmax(axis=3)  # first occurrence on ties
        y = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
        return np.ascontiguousarray(y), ((x.shape, idx) if train else None)

    def backward(self, dy, cache):
        in_shape, idx = cache
        b, c, length = in_shape
        out_len = idx.shape[2]
        pos = idx + np.arange(out_len) * self.stride
        flat = (np.arange(b * c).reshape(b, c, 1) * length + pos).ravel()
        dx = np.bincount(flat, weights=dy.ravel().astype(np.float64), minlength=b * c * length)
        return dx.reshape(in_shape).astype(dy.dtype), {}


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train, rng=None):
        return x.reshape(x.shape[0], -1), (x.shape if train else None)

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class Dense(Layer):
    kind = "Dense"

    def __init__(self, units: int, activation: str = "linear"):
        super().__init__()
        if units < 1:
            raise ContractError("Dense needs at least one unit")
        self.units = int(units)
        self.activation = _check_activation(activation)

    def config(self):
        return {"units": self.units, "activation": self.activation}

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ContractError(f"Dense expects flat features, got {in_shape}; add Flatten first")
        return (self.units,)

    def init_params(self, in_shape, rng, dtype):
        limit = np.sqrt(6.0 / in_shape[0])
        self.params = {
            "W": rng.uniform(-limit, limit, (in_shape[0], self.units)).astype(dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }

    def forward(self, x, train, rng=None):
        w, bias = self.params["W"], self.params["b"]
        x64 = x.astype(np.float64)
        z = x64 @ w.astype(np.float64)
        z += bias
        z = z.astype(w.dtype)
        y = np.maximum(z, 0) if self.activation == "relu" else z
        return y, ((x64, z) if train else None)

    def backward(self, dy, cache):
        x64, z = cache
        w = self.params["W"]
        if self.activation == "relu":
            dy = dy * (z > 0)
        dz = dy.astype(np.float64)
        grads = {"W": (x64.T @ dz).astype(w.dtype), "b": dz.sum(axis=0).astype(w.dtype)}
        dx = (dz @ w.T.astype(np.float64)).astype(w.dtype)
        return dx, grads


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1/(1-rate)`` at train time."""

    kind = "Dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, train, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ContractError("train-mode dropout needs a seeded generator")
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache):
        return (dy if cache is None else dy * cache), {}


class Softmax(Layer):
    kind = "Softmax"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ContractError("Softmax expects flat logits")
        return in_shape

    def forward(self, x, train, rng=None):
        z = x.astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        return p.astype(x.dtype), None

    def backward(self, dy, cache):
        raise ContractError("Softmax gradient is taken jointly with the loss; see loss_cce")


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, MaxPool1D, Flatten, Dense, Dropout, Softmax)}
