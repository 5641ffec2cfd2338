"""
Grid helpers: framing, log compression and bilinear rescaling.
"""

from functools import lru_cache
from typing import Union

import numpy as np

from src.dsp.types import Spectrogram
from src.utils.errors import ShapeError


def frame_average(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """
    Mean of x over frames of `window` samples every `hop` samples (last axis).
    Signals shorter than one window are zero-padded to one frame.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < window:
        x = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, window - n)])
        n = window
    starts = np.arange(0, n - window + 1, hop)
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    return (csum[..., starts + window] - csum[..., starts]) / window


def log_compress(values: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    return np.log(np.maximum(values, 0.0) + eps)


@lru_cache(maxsize=64)
def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """
    [n_out, n_in] linear interpolation weights with half-pixel centres and
    clamped edges. Rows sum to 1 and weights are non-negative.
    """
    if n_out < 1:
        raise ShapeError(f"Target size must be >= 1, got {n_out}")
    if n_in < 1:
        raise ShapeError(f"Source size must be >= 1, got {n_in}")
    if n_in == n_out:
        return np.eye(n_in)
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    m.setflags(write=False)
    return m


def bilinear_resize(grid: np.ndarray, F: int, T: int) -> np.ndarray:
    """Resize the last two axes of `grid` to F x T"""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim < 2:
        raise ShapeError(f"Grid must be at least 2-D, got shape {grid.shape}")
    rows = interpolation_matrix(grid.shape[-2], F)
    cols = interpolation_matrix(grid.shape[-1], T)
    return np.matmul(np.matmul(rows, grid), cols.T)


def rescale(s: Union[Spectrogram, np.ndarray], F: int, T: int) -> Union[Spectrogram, np.ndarray]:
    """Bilinear rescale of a spectrogram (or raw grid) onto F x T"""
    if F < 1 or T < 1:
        raise ShapeError(f"Target dims must be >= 1, got {F}x{T}")
    if isinstance(s, Spectrogram):
        if s.F < 2 or s.T < 2:
            raise ShapeError(f"Cannot rescale a degenerate {s.F}x{s.T} spectrogram")
        return Spectrogram(bilinear_resize(s.values, F, T), s.kind)
    return bilinear_resize(s, F, T)
