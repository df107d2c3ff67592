"""Parameter initialization: Glorot/Xavier normal weights, zero biases."""

from __future__ import annotations

import numpy as np

from .layers import (
    ParamSet,
    ROLE_CONV_BIAS,
    ROLE_CONV_KERNEL,
    ROLE_LINEAR_BIAS,
    ROLE_LINEAR_WEIGHT,
    ROLE_LSTM_BIAS,
    ROLE_LSTM_WEIGHT,
)

_BIAS_ROLES = {ROLE_CONV_BIAS, ROLE_LINEAR_BIAS, ROLE_LSTM_BIAS}


def fan_in_out(shape: tuple[int, ...], role: str) -> tuple[int, int]:
    if role == ROLE_CONV_KERNEL:
        out_c, in_c, k = shape
        return in_c * k, out_c * k
    if role in (ROLE_LINEAR_WEIGHT, ROLE_LSTM_WEIGHT):
        out_f, in_f = shape
        return in_f, out_f
    raise ValueError(f"no fan definition for role {role!r}")


def xavier_normal_init(param_set: ParamSet, rng_seed: int) -> ParamSet:
    """Draw each weight from Normal(0, 2/(fan_in+fan_out)); zero all biases.

    Parameters are visited in their fixed registration order, so a fixed
    seed reproduces the exact same values.
    """
    rng = np.random.default_rng(rng_seed)
    for p in param_set:
        if p.role in _BIAS_ROLES:
            p.data = np.zeros(p.data.shape)
            continue
        fan_in, fan_out = fan_in_out(p.data.shape, p.role)
        std = np.sqrt(2.0 / (fan_in + fan_out))
        p.data = rng.normal(0.0, std, size=p.data.shape)
    return param_set
