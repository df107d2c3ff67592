from .tensor import (
    MissingTape,
    ShapeMismatch,
    Tensor,
    conv1d,
    cross_entropy,
    dropout,
    last_step,
    lstm,
    mean_last_axis,
    relu,
    sigmoid,
    sum_all,
    tanh,
)
from .layers import ConvBlock, Linear, LSTMBlock, Model, Parameter, ParamSet
from .init import xavier_normal_init
from .optim import Adam

__all__ = [
    "Adam",
    "ConvBlock",
    "Linear",
    "LSTMBlock",
    "MissingTape",
    "Model",
    "Parameter",
    "ParamSet",
    "ShapeMismatch",
    "Tensor",
    "conv1d",
    "cross_entropy",
    "dropout",
    "last_step",
    "lstm",
    "mean_last_axis",
    "relu",
    "sigmoid",
    "sum_all",
    "tanh",
    "xavier_normal_init",
]
