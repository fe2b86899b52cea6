"""Parameter containers and the small set of layers the encoders share.

`Module` provides recursive parameter/buffer discovery driven by attribute
insertion order, which makes the walk deterministic: the same model class
always yields the same names in the same order. Checkpointing relies on that.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Buffer:
    """Non-trainable named state that still belongs in checkpoints (e.g. running stats)."""

    __slots__ = ("data", "name")

    def __init__(self, data, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.name = name


class Module:
    def __init__(self):
        self.training = True

    def _children(self) -> Iterator[tuple[str, object]]:
        for attr, value in vars(self).items():
            if attr == "training":
                continue
            if isinstance(value, (Parameter, Buffer, Module)):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Buffer, Module)):
                        yield f"{attr}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in self._children():
            name = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Parameter):
                value.name = name
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Buffer]]:
        for attr, value in self._children():
            name = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Buffer):
                value.name = name
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(name)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Affine map y = x @ W + b with W of shape (in_dim, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(xavier_uniform(rng, in_dim, out_dim, (in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class BatchNorm1d(Module):
    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.running_mean = Buffer(np.zeros(dim))
        self.running_var = Buffer(np.ones(dim))
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean.data,
            self.running_var.data,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class DSConv2d(Module):
    """Depthwise separable 3x3 convolution block with a fixed dilation."""

    def __init__(self, channels: int, out_channels: int, dilation: int, rng: np.random.Generator):
        super().__init__()
        if dilation < 1:
            raise ValueError(f"dilation must be a positive integer, got {dilation}")
        self.depthwise = Parameter(xavier_uniform(rng, 9, 9, (channels, 3, 3)))
        self.pointwise = Parameter(xavier_uniform(rng, channels, out_channels, (out_channels, channels)))
        self.bias = Parameter(np.zeros(out_channels))
        self.dilation = dilation

    def __call__(self, x: Tensor) -> Tensor:
        return T.dsconv2d(x, self.depthwise, self.pointwise, self.bias, dilation=self.dilation)


class Dropout(Module):
    """Inverted dropout fed by an externally owned generator for reproducibility."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.rng, training=self.training)
