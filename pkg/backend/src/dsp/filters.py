"""
Waveform conditioning: resampling, band-pass filtering, duplicate padding.
"""

import logging
from fractions import Fraction

import numpy as np
from scipy import signal

from src.dsp.types import Waveform
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)

# upper edges this close to Nyquist cannot be realised as a band edge
_NYQUIST_MARGIN = 1e-3


def resample(w: Waveform, target_rate: float) -> Waveform:
    """Polyphase (Kaiser-windowed sinc) resampling to target_rate"""
    if not target_rate > 0:
        raise ShapeError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.rate:
        return Waveform(w.samples.copy(), w.rate)

    ratio = Fraction(target_rate).limit_denominator(10_000) / Fraction(w.rate).limit_denominator(10_000)
    y = signal.resample_poly(w.samples, ratio.numerator, ratio.denominator, window=("kaiser", 5.0))

    n = int(round(len(w) * target_rate / w.rate))
    if y.size > n:
        y = y[:n]
    elif y.size < n:
        y = np.pad(y, (0, n - y.size))
    return Waveform(y, float(target_rate))


def design_bandpass(lo: float, hi: float, rate: float, order: int = 4) -> np.ndarray:
    """Second-order sections of the Butterworth filter for [lo, hi]"""
    nyquist = rate / 2.0
    if not 0 < lo < hi:
        raise ShapeError(f"Band edges must satisfy 0 < lo < hi, got lo={lo}, hi={hi}")
    if hi > nyquist * (1 + 1e-9):
        raise ShapeError(f"Upper band edge {hi} Hz exceeds Nyquist ({nyquist} Hz)")
    if hi >= nyquist * (1 - _NYQUIST_MARGIN):
        # the band reaches Nyquist: only the lower edge is a real constraint
        return signal.butter(order, lo, btype="highpass", fs=rate, output="sos")
    return signal.butter(order, [lo, hi], btype="bandpass", fs=rate, output="sos")


def bandpass(w: Waveform, lo: float, hi: float, order: int = 4) -> Waveform:
    """Zero-phase (forward-backward) Butterworth band-pass"""
    sos = design_bandpass(lo, hi, w.rate, order)
    padlen = min(3 * (2 * sos.shape[0] + 1), len(w) - 1)
    y = signal.sosfiltfilt(sos, w.samples, padlen=max(padlen, 0))
    return Waveform(y, w.rate)


def pad_duplicate(w: Waveform, target_s: float) -> Waveform:
    """Tile the waveform end-to-end to round(target_s * rate) samples"""
    n = int(round(target_s * w.rate))
    if n < 1:
        raise ShapeError(f"Target duration {target_s}s is shorter than one sample")
    return Waveform(np.resize(w.samples, n), w.rate)
