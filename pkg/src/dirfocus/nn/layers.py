"""Parameterised layers with a small module system."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor

__all__ = ["Module", "Parameter", "Conv", "Linear", "BatchNorm", "kaiming_uniform"]


def Parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, op="param")


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """He-uniform draw for ReLU networks: U(-b, b) with b = sqrt(6 / fan_in)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


class Module:
    """Container of named parameters, buffers and child modules.

    Attribute assignment registers parameters (tracked tensors), buffers
    (plain arrays listed in ``_buffer_names``) and sub-modules; names are
    dotted paths in registration order, which fixes the checkpoint layout.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv(Module):
    """N-d convolution; the kernel rank picks 1-D, 2-D or 3-D."""

    def __init__(self, in_channels: int, out_channels: int, kernel, rng: np.random.Generator,
                 stride=1, padding=0, bias: bool = True):
        super().__init__()
        kernel = tuple(np.atleast_1d(kernel).astype(int))
        fan_in = in_channels * int(np.prod(kernel))
        self.weight = Parameter(kaiming_uniform(rng, (out_channels, in_channels) + kernel, fan_in))
        if bias:
            b = 1.0 / np.sqrt(fan_in)
            self.bias = Parameter(rng.uniform(-b, b, out_channels))
        else:
            self.bias = None
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return F.conv(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        if bias:
            b = 1.0 / np.sqrt(in_features)
            self.bias = Parameter(rng.uniform(-b, b, out_features))
        else:
            self.bias = None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class BatchNorm(Module):
    """Per-channel batch normalisation (axis 1) with running statistics."""

    def __init__(self, n_channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(n_channels))
        self.beta = Parameter(np.zeros(n_channels))
        self.register_buffer("running_mean", np.zeros(n_channels))
        self.register_buffer("running_var", np.ones(n_channels))
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)
