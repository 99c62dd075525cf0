"""JSON weight files.

Layout::

    {"format_version": 1,
     "metadata": {"input_len", "in_channels", "num_classes", "normalization", "name", "dtype"},
     "layers": [{"type", "config", "shapes": {param: shape}, "values": {param: [row-major]}}]}

float32 values are written through their exact float64 expansion, so a
load of a saved model reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from ..errors import CorruptFileError, FormatError, VersionError
from .layers import LAYER_TYPES
from .model import Model

FORMAT_VERSION = 1


def model_to_dict(model: Model) -> dict:
    layers = []
    for layer in model.layers:
        layers.append({
            "type": layer.kind,
            "config": layer.config(),
            "shapes": {k: list(v.shape) for k, v in layer.params.items()},
            "values": {k: v.astype(np.float64).ravel().tolist() for k, v in layer.params.items()},
        })
    return {
        "format_version": FORMAT_VERSION,
        "metadata": {
            "input_len": model.input_len,
            "in_channels": model.in_channels,
            "num_classes": model.num_classes,
            "normalization": model.normalization,
            "name": model.name,
            "dtype": np.dtype(model.dtype).name,
        },
        "layers": layers,
    }


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise FormatError("not a weight file: missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported weight format version {doc['format_version']!r}")
    try:
        meta = doc["metadata"]
        dtype = np.dtype(meta.get("dtype", "float32"))
        layers = []
        for entry in doc["layers"]:
            cls = LAYER_TYPES.get(entry["type"])
            if cls is None:
                raise FormatError(f"unknown layer type {entry['type']!r}")
            layers.append((cls(**entry["config"]), entry))
        model = Model(
            [layer for layer, _ in layers],
            meta["input_len"],
            meta["num_classes"],
            in_channels=meta["in_channels"],
            normalization=meta["normalization"],
            name=meta.get("name", "model"),
        )
        # fresh params give the expected shapes to validate against
        model.initialize(0, dtype)
        for layer, entry in layers:
            if set(entry["shapes"]) != set(layer.params):
                raise FormatError(f"{layer.kind} parameters {sorted(entry['shapes'])} != {sorted(layer.params)}")
            for key, expected in layer.params.items():
                shape = tuple(entry["shapes"][key])
                values = np.asarray(entry["values"][key], dtype=np.float64)
                if shape != expected.shape or values.size != expected.size:
                    raise FormatError(
                        f"{layer.kind}.{key}: shape {shape} with {values.size} values, expected {expected.shape}"
                    )
                layer.params[key] = values.astype(dtype).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed weight file: {exc}") from exc
    return model


def save_weights(model: Model, path) -> None:
    """Write atomically so a crash never leaves a half-written file behind."""
    path = os.fspath(path)
    text = json.dumps(model_to_dict(model), separators=(",", ":"))
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".json.tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_weights(path) -> Model:
    with open(path, "r") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: truncated or corrupt weight file ({exc})") from exc
    return model_from_dict(doc)
