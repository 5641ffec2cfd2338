"""
Central finite-difference gradient check.
"""

import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.autodiff.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

Inputs = Union[Tensor, Sequence[Tensor]]


def finite_diff_check(
    f: Callable[[Inputs], Tensor],
    x: Inputs,
    h: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare autodiff gradients of the scalar f(x) with central differences.

    `x` is a tensor or a list of tensors (e.g. model parameters); f is called
    with `x` unchanged. `f` must be deterministic (no dropout, no fresh
    randomness). Returns max |a - n| / (|a| + |n| + 1e-12) over the checked
    coordinates; `max_coords` checks a random subset per tensor.
    """
    tensors = [x] if isinstance(x, Tensor) else list(x)
    for t in tensors:
        if t.data.dtype != np.float64:
            logger.warning("Gradient check on %s data; use precision('float64')", t.data.dtype)
        t.grad = None

    loss = f(x)
    backward(loss, params=tensors)
    analytic = [t.grad.copy() for t in tensors]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for t, grad in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            flat_grad = grad.reshape(-1)
            for idx in coords:
                original = flat[idx]
                flat[idx] = original + h
                f_plus = float(f(x).data)
                flat[idx] = original - h
                f_minus = float(f(x).data)
                flat[idx] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = float(flat_grad[idx])
                worst = max(worst, abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12))
    return worst
