from .adam import AdamState, adam_step
from .io import load_weights, model_from_dict, model_to_dict, save_weights
from .layers import Conv1D, Dense, Dropout, Flatten, Layer, MaxPool1D, Softmax
from .model import (
    Model,
    Tape,
    backward,
    backward_from_logits,
    build_baseline_model,
    build_reference_model,
    forward,
    loss_cce,
)

__all__ = [
    "AdamState", "adam_step", "load_weights", "save_weights", "model_from_dict", "model_to_dict",
    "Conv1D", "Dense", "Dropout", "Flatten", "Layer", "MaxPool1D", "Softmax",
    "Model", "Tape", "backward", "backward_from_logits", "build_baseline_model",
    "build_reference_model", "forward", "loss_cce",
]
