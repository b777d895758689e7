"""Weight initialization."""

import math
from typing import Sequence

import numpy as np

from core.engine.rng import Rng
from core.engine.tensor import DEFAULT_DTYPE, Tensor


def kaiming_gain(slope: float) -> float:
    return math.sqrt(2.0 / (1.0 + slope ** 2))


def kaiming_init(
    shape: Sequence[int],
    rng: Rng,
    nonlinearity_slope: float = 0.0,
    dtype=DEFAULT_DTYPE,
) -> Tensor:
    """
    Kaiming-normal weights in fan_in mode.

    Args:
        shape: [out, in, *kernel] for convolutions, [out, in] for linear layers
        rng: Stream the samples are drawn from
        nonlinearity_slope: Negative slope of the following leaky ReLU (0 = ReLU)
        dtype: Tensor dtype

    Returns:
        Tensor drawn from N(0, gain^2 / fan_in), gain = sqrt(2 / (1 + slope^2))
    """
    if len(shape) < 2:
        raise ValueError(f"kaiming_init needs a weight shape with fan_in, got {tuple(shape)}")
    fan_in = int(np.prod(shape[1:]))
    if fan_in == 0:
        raise ValueError(f"kaiming_init: zero fan_in for shape {tuple(shape)}")
    std = kaiming_gain(nonlinearity_slope) / math.sqrt(fan_in)
    return Tensor(rng.normal(tuple(shape), std=std, dtype=dtype), dtype=dtype)
