"""Dense float64 layers with hand-written backward passes, Adam and a gradient checker."""

from .gradcheck import grad_check, numeric_gradient, relative_error
from .layers import (
    LSTM,
    AdditiveAttention,
    ColumnEmbedder,
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    LastStep,
    Layer,
    MaxPool1D,
    ReLU,
    Sigmoid,
    Softmax,
    Tanh,
    sigmoid,
    softmax,
)
from .loss import bce_loss
from .optim import Adam, AdamState, adam_step
from .params import Parameter, glorot_uniform, layer_rng

__all__ = [
    "LSTM", "AdditiveAttention", "ColumnEmbedder", "Conv1D", "Dense", "Embedding",
    "Flatten", "LastStep", "Layer", "MaxPool1D", "ReLU", "Sigmoid", "Softmax", "Tanh",
    "sigmoid", "softmax", "bce_loss", "Adam", "AdamState", "adam_step", "Parameter",
    "glorot_uniform", "layer_rng", "grad_check", "numeric_gradient", "relative_error",
]
