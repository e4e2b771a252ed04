"""Dense-tensor layers with reverse-mode gradients, float64 throughout."""

from .kernels import BACKEND
from .ops import (
    AdamState,
    adam_step,
    conv1d_backward,
    conv1d_forward,
    dense_forward,
    embedding_backward,
    embedding_forward,
    grad_check,
    maxpool1d_backward,
    maxpool1d_forward,
    mse_loss,
    mse_loss_backward,
    relu,
    relu_backward,
    sgd_step,
)

__all__ = [
    "BACKEND",
    "AdamState",
    "adam_step",
    "conv1d_backward",
    "conv1d_forward",
    "dense_forward",
    "embedding_backward",
    "embedding_forward",
    "grad_check",
    "maxpool1d_backward",
    "maxpool1d_forward",
    "mse_loss",
    "mse_loss_backward",
    "relu",
    "relu_backward",
    "sgd_step",
]
