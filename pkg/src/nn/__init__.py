"""Minimal reverse-mode autodiff for 1D convolutional depth regressors."""

from src.nn.tensor import (
    GraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    grad_enabled,
    no_grad,
)
from src.nn.layers import BatchNorm1d, Conv1d, ConvBlock, Module, Residual
from src.nn.optim import Adam, AdamState, adam_step
from src.nn.checkpoint import CheckpointError, load_checkpoint, read_manifest, save_checkpoint

__all__ = [
    # Autodiff
    "Tensor",
    "as_tensor",
    "GraphError",
    "NonFiniteError",
    "ShapeError",
    "grad_enabled",
    "no_grad",

    # Layers
    "Module",
    "Conv1d",
    "BatchNorm1d",
    "ConvBlock",
    "Residual",

    # Optimizer
    "Adam",
    "AdamState",
    "adam_step",

    # Checkpoints
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "read_manifest",
]
