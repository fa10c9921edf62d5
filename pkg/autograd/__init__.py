from autograd.tensor import (
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    UsageError,
    backward,
    numerics,
    precision,
)
from autograd import ops
from autograd.conv import conv2d
from autograd.sampling import bilinear_sample
from autograd.gradcheck import grad_check

__all__ = [
    "DomainError",
    "ShapeError",
    "Tape",
    "Tensor",
    "UsageError",
    "backward",
    "bilinear_sample",
    "conv2d",
    "grad_check",
    "numerics",
    "ops",
    "precision",
]
