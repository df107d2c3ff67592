"""Layer objects and the Model container built from them.

A Model owns an ordered ParamSet and an RNG for dropout masks. When the
deterministic flag is set, dropout becomes the identity so repeated
forward passes agree bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeMismatch, Tensor

ROLE_CONV_KERNEL = "conv kernel"
ROLE_CONV_BIAS = "conv bias"
ROLE_LINEAR_WEIGHT = "linear weight"
ROLE_LINEAR_BIAS = "linear bias"
ROLE_LSTM_WEIGHT = "lstm gate weights"
ROLE_LSTM_BIAS = "lstm gate biases"


class Parameter:
    """A named trainable tensor with a role tag used by initialization."""

    def __init__(self, name: str, value: np.ndarray, role: str):
        self.name = name
        self.tensor = Tensor(value, requires_grad=True)
        self.role = role

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = np.asarray(value, dtype=np.float64)

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad


class ParamSet:
    """Ordered collection of uniquely named parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ValueError(f"duplicate parameter name: {param.name}")
        self._params[param.name] = param
        return param

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self:
            p.tensor.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self:
            p.data = state[p.name].copy()


class ConvBlock:
    """conv1d -> ReLU -> dropout."""

    def __init__(self, name: str, params: ParamSet, in_channels: int, out_channels: int,
                 kernel: int, dropout: float):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.dropout = dropout
        self.w = params.add(Parameter(f"{name}.weight",
                                      np.zeros((out_channels, in_channels, kernel)),
                                      ROLE_CONV_KERNEL))
        self.b = params.add(Parameter(f"{name}.bias", np.zeros(out_channels), ROLE_CONV_BIAS))

    def forward(self, x: Tensor, deterministic: bool, rng: np.random.Generator):
        out = T.relu(T.conv1d(x, self.w.tensor, self.b.tensor, layer_name=self.name))
        tap = out
        if not deterministic and self.dropout > 0.0:
            out = T.dropout(out, self.dropout, rng)
        return out, tap


class LSTMBlock:
    """One LSTM layer followed by dropout on its hidden-state sequence."""

    def __init__(self, name: str, params: ParamSet, in_channels: int, hidden: int, dropout: float):
        self.name = name
        self.in_channels = in_channels
        self.hidden = hidden
        self.dropout = dropout
        self.w_ih = params.add(Parameter(f"{name}.weight_ih",
                                         np.zeros((4 * hidden, in_channels)), ROLE_LSTM_WEIGHT))
        self.w_hh = params.add(Parameter(f"{name}.weight_hh",
                                         np.zeros((4 * hidden, hidden)), ROLE_LSTM_WEIGHT))
        self.b = params.add(Parameter(f"{name}.bias", np.zeros(4 * hidden), ROLE_LSTM_BIAS))

    def forward(self, x: Tensor, deterministic: bool, rng: np.random.Generator):
        out = T.lstm(x, self.w_ih.tensor, self.w_hh.tensor, self.b.tensor, layer_name=self.name)
        tap = out
        if not deterministic and self.dropout > 0.0:
            out = T.dropout(out, self.dropout, rng)
        return out, tap


class Linear:
    def __init__(self, name: str, params: ParamSet, in_features: int, out_features: int):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.w = params.add(Parameter(f"{name}.weight",
                                      np.zeros((out_features, in_features)), ROLE_LINEAR_WEIGHT))
        self.b = params.add(Parameter(f"{name}.bias", np.zeros(out_features), ROLE_LINEAR_BIAS))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"{self.name}: expected [B, {self.in_features}] input, got {x.shape}")
        return T.add(T.matmul(x, T.transpose2d(self.w.tensor)), self.b.tensor)


class Model:
    """A CNN or LSTM classifier assembled from blocks plus a linear head.

    kind: "cnn" (conv blocks -> global average pool -> head) or
    "lstm" (stacked LSTM blocks -> last hidden state -> head).
    Forward keeps per-block post-activation outputs in ``activation_taps``.
    """

    def __init__(self, kind: str, blocks: list, head: Linear, params: ParamSet,
                 input_channels: int, num_classes: int, rng: np.random.Generator):
        self.kind = kind
        self.blocks = blocks
        self.head = head
        self.params = params
        self.input_channels = input_channels
        self.num_classes = num_classes
        self.rng = rng
        self.deterministic = True
        self.activation_taps: list[Tensor] = []

    def forward(self, batch: Tensor) -> Tensor:
        if batch.ndim != 3 or batch.shape[1] != self.input_channels:
            raise ShapeMismatch(
                f"model input: expected [B, {self.input_channels}, L], got {batch.shape}")
        self.activation_taps = []
        out = batch
        for block in self.blocks:
            out, tap = block.forward(out, self.deterministic, self.rng)
            self.activation_taps.append(tap)
        if self.kind == "cnn":
            feat = T.mean_last_axis(out)
        else:
            feat = T.last_step(out)
        return self.head.forward(feat)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params)
