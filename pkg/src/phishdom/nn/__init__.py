"""Minimal neural-network toolkit: float64 tensors, reverse-mode autodiff,
a handful of layers, Adam, checkpointing and gradient checking."""

from . import tensor as ops
from .checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .gradcheck import gradcheck
from .layers import BatchNorm1d, Buffer, DSConv2d, Dropout, Linear, LayerNorm, Module, xavier_uniform
from .optim import Adam
from .tensor import (
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    no_grad,
    set_finite_checks,
)

__all__ = [
    "ops",
    "Adam",
    "BatchNorm1d",
    "Buffer",
    "DSConv2d",
    "Dropout",
    "Linear",
    "LayerNorm",
    "Module",
    "NonFiniteError",
    "Parameter",
    "ShapeError",
    "Tensor",
    "gradcheck",
    "load_checkpoint",
    "no_grad",
    "read_manifest",
    "save_checkpoint",
    "set_finite_checks",
    "xavier_uniform",
]
