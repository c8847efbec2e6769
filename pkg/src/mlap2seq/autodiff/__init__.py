"""Minimal numpy reverse-mode autodiff used by the model."""

from . import ops
from .gradcheck import grad_check, numeric_grad
from .ops import OPS, primitive_forward
from .optim import AdamState, adam_step
from .tensor import (
    AutodiffError,
    ContractError,
    NumericInstabilityError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "AdamState",
    "AutodiffError",
    "ContractError",
    "NumericInstabilityError",
    "OPS",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "grad_check",
    "is_grad_enabled",
    "no_grad",
    "numeric_grad",
    "ops",
    "primitive_forward",
]
