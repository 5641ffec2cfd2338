"""
ERB-spaced gammatone filterbank spectrogram.

Each channel is an all-pole complex gammatone filter (a cascade of
`order` identical one-pole complex resonators), so the output is analytic
and |y|^2 is a smooth envelope of the band energy.
"""

import logging
from math import factorial, pi

import numpy as np
from scipy import signal

from src.dsp.grid import frame_average, log_compress
from src.dsp.types import Spectrogram, SpectrogramKind, Waveform

logger = logging.getLogger(__name__)

ERB_L = 24.7
ERB_Q = 9.26449


def erb(f):
    """Equivalent rectangular bandwidth in Hz"""
    return ERB_L + np.asarray(f, dtype=np.float64) / ERB_Q


def hz_to_erb_rate(f):
    return ERB_Q * np.log(1.0 + np.asarray(f, dtype=np.float64) / (ERB_L * ERB_Q))


def erb_rate_to_hz(e):
    return (np.exp(np.asarray(e, dtype=np.float64) / ERB_Q) - 1.0) * ERB_L * ERB_Q


def gammatone_center_frequencies(n_channels: int = 128, lo: float = 60.0, hi: float = 2000.0) -> np.ndarray:
    """Centre frequencies equally spaced on the ERB-rate scale, ascending"""
    return erb_rate_to_hz(np.linspace(hz_to_erb_rate(lo), hz_to_erb_rate(hi), n_channels))


def _bandwidth_factor(order: int) -> float:
    return pi * factorial(2 * order - 2) * 2.0 ** -(2 * order - 2) / factorial(order - 1) ** 2


def gammatone_filter(samples: np.ndarray, rate: float, center: float, order: int = 4) -> np.ndarray:
    """Complex (analytic) output of one gammatone channel"""
    b = erb(center) / _bandwidth_factor(order)
    lam = np.exp(-2.0 * pi * b / rate)
    coef = lam * np.exp(2j * pi * center / rate)
    gain = 2.0 * (1.0 - abs(coef)) ** order

    y = samples.astype(np.complex128)
    y = signal.lfilter([gain], [1.0, -coef], y)
    for _ in range(order - 1):
        y = signal.lfilter([1.0], [1.0, -coef], y)
    return y


def gammatone_spectrogram(
    w: Waveform,
    n_channels: int = 128,
    lo: float = 60.0,
    hi: float = 2000.0,
    window: int = 92,
    hop: int = 46,
    eps: float = 1e-10,
    order: int = 4,
    power: bool = True,
    log: bool = True,
) -> Spectrogram:
    """Frame-averaged band energy per channel, rows ascending in frequency"""
    centers = gammatone_center_frequencies(n_channels, lo, hi)
    rows = []
    for cf in centers:
        y = gammatone_filter(w.samples, w.rate, cf, order)
        envelope = np.abs(y) ** 2 if power else np.abs(y)
        rows.append(frame_average(envelope, window, hop))
    values = np.vstack(rows)
    if log:
        values = log_compress(values, eps)
    return Spectrogram(values, SpectrogramKind.GA)
