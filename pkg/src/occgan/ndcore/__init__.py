"""Minimal dense-tensor numerics: reverse-mode autodiff and Adam."""

from .optim import Adam, AdamState, adam_step
from .tensor import (
    DTYPE,
    PRIMITIVES,
    GradientTape,
    NumericFailure,
    ShapeError,
    TapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    clamp,
    concat,
    forward_op,
    leaky_relu,
    log,
    matmul,
    mean,
    parameter,
    sigmoid,
    sqdiff,
    sum_,
    tanh,
)

__all__ = [
    "Adam",
    "AdamState",
    "DTYPE",
    "GradientTape",
    "NumericFailure",
    "PRIMITIVES",
    "ShapeError",
    "TapeError",
    "Tensor",
    "active_tape",
    "adam_step",
    "as_tensor",
    "backward",
    "clamp",
    "concat",
    "forward_op",
    "leaky_relu",
    "log",
    "matmul",
    "mean",
    "parameter",
    "sigmoid",
    "sqdiff",
    "sum_",
    "tanh",
]
