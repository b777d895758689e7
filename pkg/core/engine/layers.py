"""
Layers

Stateful wrappers around the functional ops. A Module discovers its
parameters, buffers and sub-modules from its attributes, so dotted names
follow attribute names (e.g. "block1.conv1.weight").
"""

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from core.engine import functional as fn
from core.engine.init import kaiming_init
from core.engine.rng import Rng
from core.engine.tensor import DEFAULT_DTYPE, Parameter, Tensor


class Module:
    """Base class for everything holding parameters."""

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def _members(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_") or name in self._buffers:
                continue
            if isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    yield f"{name}.{index}", item
            else:
                yield name, value

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in self._members():
            if isinstance(value, Module):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._members():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self.children():
            yield from child.named_buffers(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: Tuple[int, int],
        rng: Rng,
        stride: Tuple[int, int] = (1, 1),
        dilation: Tuple[int, int] = (1, 1),
        padding: Tuple[int, int] = (0, 0),
        slope: float = 0.0,
        dtype=DEFAULT_DTYPE,
    ):
        super().__init__()
        self.stride, self.dilation, self.padding = stride, dilation, padding
        self.weight = Parameter(kaiming_init((out_ch, in_ch, *kernel), rng, slope, dtype).data)
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return fn.conv2d(x, self.weight, self.bias, self.stride, self.dilation, self.padding)


class Conv1d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: Rng,
        stride: int = 1,
        dilation: int = 1,
        padding: int = 0,
        slope: float = 0.0,
        dtype=DEFAULT_DTYPE,
    ):
        super().__init__()
        self.stride, self.dilation, self.padding = stride, dilation, padding
        self.weight = Parameter(kaiming_init((out_ch, in_ch, kernel), rng, slope, dtype).data)
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return fn.conv1d(x, self.weight, self.bias, self.stride, self.dilation, self.padding)


class Linear(Module):
    def __init__(self, f_in: int, f_out: int, rng: Rng, slope: float = 0.0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.weight = Parameter(kaiming_init((f_out, f_in), rng, slope, dtype).data)
        self.bias = Parameter(np.zeros(f_out, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return fn.linear(x, self.weight, self.bias)


class BatchNorm1d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.weight = Parameter(np.ones(channels, dtype=dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return fn.batchnorm1d(
            x,
            self.weight,
            self.bias,
            self.running_mean,
            self.running_var,
            momentum=self.momentum,
            eps=self.eps,
            training=self.training,
        )


class Dropout(Module):
    """Inverted dropout drawing masks from its own stream."""

    def __init__(self, p: float, rng: Optional[Rng] = None):
        super().__init__()
        self.p = p
        self._rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return fn.dropout(x, self.p, self.training, self._rng)


class MaxPool1d(Module):
    def __init__(self, kernel: int, stride: int):
        super().__init__()
        self.kernel, self.stride = kernel, stride

    def forward(self, x: Tensor) -> Tensor:
        return fn.maxpool1d(x, self.kernel, self.stride)


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.01):
        super().__init__()
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return fn.leaky_relu(x, self.slope)
