"""
Grid-level augmentations: mixup and crop-then-resize.
"""

from typing import Optional, Tuple

import numpy as np

from src.dsp.grid import bilinear_resize
from src.utils.errors import ShapeError, ValidationFailure


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def mixup(a: np.ndarray, ya: np.ndarray, b: np.ndarray, yb: np.ndarray, r: float) -> Tuple[np.ndarray, np.ndarray]:
    """r * a + (1 - r) * b, on the grids and on the label vectors"""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    ya, yb = np.asarray(ya, dtype=np.float64), np.asarray(yb, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"mixup grids differ in shape: {a.shape} vs {b.shape}")
    if ya.shape != yb.shape:
        raise ShapeError(f"mixup labels differ in shape: {ya.shape} vs {yb.shape}")
    if not 0.0 <= r <= 1.0:
        raise ValidationFailure(f"mixup ratio must be in [0, 1], got {r}")
    return r * a + (1.0 - r) * b, r * ya + (1.0 - r) * yb


def crop_window(shape: Tuple[int, int], df: int, dt: int, rng: np.random.Generator) -> Tuple[int, int]:
    """Top-left corner of a random (F - df) x (T - dt) window"""
    F, T = shape
    if df < 0 or dt < 0:
        raise ShapeError(f"Crop sizes must be non-negative, got {df}, {dt}")
    if df >= F or dt >= T:
        raise ShapeError(f"Crop of {df}x{dt} bins leaves nothing of a {F}x{T} grid")
    return int(rng.integers(0, df + 1)), int(rng.integers(0, dt + 1))


def random_crop(
    grid: np.ndarray,
    df: int,
    dt: int,
    rng: Optional[np.random.Generator] = None,
    window: Optional[Tuple[int, int]] = None,
) -> np.ndarray:
    """
    Cut a (F - df) x (T - dt) window from the last two axes and resize it
    back to F x T. Leading axes (e.g. the three spectrogram kinds) share
    the window.
    """
    grid = np.asarray(grid, dtype=np.float64)
    F, T = grid.shape[-2:]
    if window is None:
        if rng is None:
            raise ValidationFailure("random_crop needs an rng or an explicit window")
        window = crop_window((F, T), df, dt, rng)
    elif df >= F or dt >= T:
        raise ShapeError(f"Crop of {df}x{dt} bins leaves nothing of a {F}x{T} grid")
    if df == 0 and dt == 0:
        return grid.copy()
    f0, t0 = window
    cut = grid[..., f0 : f0 + F - df, t0 : t0 + T - dt]
    return bilinear_resize(cut, F, T)
