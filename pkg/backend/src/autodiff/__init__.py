"""
Minimal reverse-mode automatic differentiation on numpy arrays.
"""

from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.nn import BatchNorm, Conv2d, Dense, Dropout, Module, Parameter, ResNorm
from src.autodiff.tensor import (
    Tensor,
    backward,
    get_dtype,
    name_scope,
    no_grad,
    node_census,
    precision,
)

__all__ = [
    "Tensor",
    "Parameter",
    "Module",
    "Conv2d",
    "Dense",
    "BatchNorm",
    "Dropout",
    "ResNorm",
    "backward",
    "finite_diff_check",
    "get_dtype",
    "name_scope",
    "no_grad",
    "node_census",
    "precision",
]
