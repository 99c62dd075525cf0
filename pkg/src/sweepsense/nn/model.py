"""Sequential model, loss, backprop and the two architectures used here."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .layers import Conv1D, Dense, Dropout, Flatten, Layer, MaxPool1D, Softmax


class Model:
    """A stack of layers ending in exactly one Softmax.

    A built model is safe to share between threads for inference: ``predict``
    reads parameters and never writes to the layers.
    """

    def __init__(
        self,
        layers: list[Layer],
        input_len: int,
        num_classes: int,
        in_channels: int = 2,
        normalization: str = "maxabs",
        name: str = "model",
    ):
        self.layers = list(layers)
        self.input_len = int(input_len)
        self.in_channels = int(in_channels)
        self.num_classes = int(num_classes)
        self.normalization = normalization
        self.name = name
        self._shapes = self._infer_shapes()

    def _infer_shapes(self) -> list[tuple[int, ...]]:
        kinds = [layer.kind for layer in self.layers]
        if kinds.count("Softmax") != 1 or kinds[-1] != "Softmax":
            raise ContractError("model must end in exactly one Softmax layer")
        shape: tuple[int, ...] = (self.in_channels, self.input_len)
        shapes = [shape]
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        if shape != (self.num_classes,):
            raise ContractError(f"model output shape {shape} != ({self.num_classes},)")
        return shapes

    @property
    def input_shape(self) -> tuple[int, int]:
        return self.in_channels, self.input_len

    @property
    def dtype(self):
        for _, p in self.named_parameters():
            return p.dtype
        return np.dtype(np.float32)

    def layer_shapes(self) -> list[tuple[int, ...]]:
        return list(self._shapes)

    def initialize(self, seed: int = 0, dtype=np.float32) -> "Model":
        """Seeded He-uniform weights, zero biases."""
        for i, layer in enumerate(self.layers):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
            layer.init_params(self._shapes[i], rng, dtype)
        return self

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                yield f"{i}.{key}", value

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def param_count(self) -> int:
        return int(sum(p.size for _, p in self.named_parameters()))

    def get_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_parameters()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            for key in layer.params:
                new = np.asarray(weights[f"{i}.{key}"])
                if new.shape != layer.params[key].shape:
                    raise ContractError(f"weight {i}.{key} has shape {new.shape}, expected {layer.params[key].shape}")
                layer.params[key] = new.astype(layer.params[key].dtype, copy=True)

    def astype(self, dtype) -> "Model":
        """Copy of this model with parameters cast to ``dtype``."""
        from .io import model_from_dict, model_to_dict

        clone = model_from_dict(model_to_dict(self))
        for layer in clone.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
        return clone

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 3 or x.shape[1:] != self.input_shape:
            raise ContractError(f"input shape {x.shape} does not match (batch, {self.in_channels}, {self.input_len})")
        return x.astype(self.dtype, copy=False)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode class probabilities, shape ``(batch, num_classes)``."""
        h = self._check_input(x)
        for layer in self.layers:
            h, _ = layer.forward(h, False)
        return h

    def __repr__(self):
        body = ", ".join(f"{layer.kind}({layer.config()})" if layer.config() else layer.kind for layer in self.layers)
        return f"Model({self.name}: {body}; params={self.param_count()})"


@dataclass
class Tape:
    """Activations recorded by a train-mode forward pass."""

    caches: list
    probs: np.ndarray


def forward(model: Model, x: np.ndarray, mode: str = "infer", rng: np.random.Generator | None = None):
    """Run the model. Returns ``probs`` in infer mode, ``(probs, tape)`` in train mode."""
    if mode == "infer":
        return model.predict(x)
    if mode != "train":
        raise ContractError(f"mode must be 'train' or 'infer', got {mode!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    h = model._check_input(x)
    caches = []
    for layer in model.layers:
        h, cache = layer.forward(h, True, rng)
        caches.append(cache)
    return h, Tape(caches, h)


def loss_cce(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient w.r.t. the softmax logits."""
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ContractError(f"probs {probs.shape} and labels {labels.shape} disagree")
    n, c = probs.shape
    if n == 0:
        raise ContractError("empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ContractError(f"labels must lie in [0, {c})")
    p64 = probs.astype(np.float64)
    picked = p64[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.clip(picked, 1e-300, 1.0))))
    grad = p64.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(probs.dtype)


def backward(model: Model, tape: Tape | None, labels) -> dict[str, np.ndarray]:
    """Parameter gradients of the mean cross-entropy for the recorded pass."""
    if tape is None:
        raise ContractError("backward needs the tape of a train-mode forward pass")
    _, dh = loss_cce(tape.probs, labels)
    return backward_from_logits(model, tape, dh)


def backward_from_logits(model: Model, tape: Tape, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    if tape is None:
        raise ContractError("backward needs the tape of a train-mode forward pass")
    grads: dict[str, np.ndarray] = {}
    dh = dlogits
    # the terminal Softmax is folded into the loss gradient
    for i in range(len(model.layers) - 2, -1, -1):
        layer = model.layers[i]
        dh, g = layer.backward(dh, tape.caches[i])
        for key, value in g.items():
            grads[f"{i}.{key}"] = value
    return grads


def build_reference_model(
    chunk_len: int,
    num_classes: int,
    *,
    filters: int = 16,
    kernel: int = 7,
    pool: int = 4,
    dense_units: int = 128,
    dropout: float = 0.5,
    seed: int = 0,
    dtype=np.float32,
) -> Model:
    """Shallow sensing CNN: one conv/max-pool pair, a hidden Dense layer with
    dropout, and the softmax classifier."""
    layers = [
        Conv1D(filters, kernel, "relu", "same"),
        MaxPool1D(pool, pool),
        Flatten(),
        Dense(dense_units, "relu"),
        Dropout(dropout),
        Dense(num_classes, "linear"),
        Softmax(),
    ]
    return Model(layers, chunk_len, num_classes, name="reference").initialize(seed, dtype)


BASELINE_CHANNELS = (32, 32, 64, 64, 128, 128, 256, 256)


def build_baseline_model(
    chunk_len: int,
    num_classes: int,
    *,
    channels: tuple[int, ...] = BASELINE_CHANNELS,
    kernel: int = 3,
    dense_units: int = 512,
    seed: int = 0,
    dtype=np.float32,
) -> Model:
    """Deep VGG-style 1D stand-in: conv pairs each followed by MaxPool(2),
    then two wide Dense layers."""
    layers: list[Layer] = []
    for i, ch in enumerate(channels):
        layers.append(Conv1D(ch, kernel, "relu", "same"))
        if i % 2 == 1:
            layers.append(MaxPool1D(2, 2))
    layers += [
        Flatten(),
        Dense(dense_units, "relu"),
        Dense(dense_units, "relu"),
        Dense(num_classes, "linear"),
        Softmax(),
    ]
    return Model(layers, chunk_len, num_classes, name="baseline").initialize(seed, dtype)
