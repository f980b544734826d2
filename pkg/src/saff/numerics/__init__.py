"""Tensor algebra, reverse-mode autodiff, optimizer and checkpoint I/O."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .optim import SGD, sgd_step
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    channel_mean_var,
    concat,
    exp,
    log,
    log_softmax,
    matmul,
    max_axis,
    reshape,
    softmax,
    sqrt,
    square,
    take_rows,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "Tensor", "as_tensor", "backward", "channel_mean_var", "concat", "exp", "log",
    "log_softmax", "matmul", "max_axis", "reshape", "softmax", "sqrt", "square",
    "take_rows", "tanh", "tmean", "tsum", "grad_check", "GradCheckReport", "SGD",
    "sgd_step", "save_checkpoint", "load_checkpoint",
]
