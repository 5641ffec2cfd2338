"""
Analytic continuous wavelet transform (scalogram) with analytic Morlet
("Amor") and generalized Morse mothers, evaluated in the Fourier domain.
"""

import logging
from enum import Enum
from typing import Iterator, Optional

import numpy as np
from scipy import fft as sp_fft

from src.dsp.grid import frame_average, log_compress
from src.dsp.types import Spectrogram, SpectrogramKind, Waveform

logger = logging.getLogger(__name__)


class WaveletMother(str, Enum):
    AMOR = "amor"
    MORSE = "morse"

    @property
    def kind(self) -> SpectrogramKind:
        return SpectrogramKind.WA if self is WaveletMother.AMOR else SpectrogramKind.WM


def peak_frequency(mother: WaveletMother, omega0: float = 6.0, gamma: float = 3.0, beta: float = 20.0) -> float:
    """Radian frequency at which the mother's spectrum peaks"""
    if WaveletMother(mother) is WaveletMother.AMOR:
        return omega0
    return (beta / gamma) ** (1.0 / gamma)


def wavelet_spectrum(
    mother: WaveletMother,
    omega: np.ndarray,
    omega0: float = 6.0,
    gamma: float = 3.0,
    beta: float = 20.0,
) -> np.ndarray:
    """Fourier transform of the mother wavelet; zero for omega <= 0, peak value 2"""
    omega = np.asarray(omega, dtype=np.float64)
    out = np.zeros_like(omega)
    pos = omega > 0
    w = omega[pos]
    if WaveletMother(mother) is WaveletMother.AMOR:
        out[pos] = 2.0 * np.exp(-0.5 * (w - omega0) ** 2)
    else:
        log_norm = np.log(2.0) + (beta / gamma) * (1.0 + np.log(gamma) - np.log(beta))
        out[pos] = np.exp(log_norm + beta * np.log(w) - w**gamma)
    return out


def cwt_pseudo_frequencies(
    mother: WaveletMother = WaveletMother.AMOR,
    n_scales: int = 128,
    lo: float = 60.0,
    hi: float = 2000.0,
) -> np.ndarray:
    """Pseudo-frequencies of the scales, log-spaced and ascending"""
    return np.geomspace(lo, hi, n_scales)


def scales_for(freqs: np.ndarray, rate: float, peak: float) -> np.ndarray:
    """Scale (in samples) whose spectral peak sits at each frequency"""
    return peak * rate / (2.0 * np.pi * np.asarray(freqs, dtype=np.float64))


def iter_cwt_rows(
    samples: np.ndarray,
    rate: float,
    mother: WaveletMother,
    freqs: np.ndarray,
    omega0: float = 6.0,
    gamma: float = 3.0,
    beta: float = 20.0,
) -> Iterator[np.ndarray]:
    """Complex coefficients one scale at a time (zero-padded, no wrap-around)"""
    n = samples.size
    nfft = sp_fft.next_fast_len(2 * n)
    spectrum = sp_fft.fft(samples, nfft)
    omega = 2.0 * np.pi * sp_fft.fftfreq(nfft)
    peak = peak_frequency(mother, omega0, gamma, beta)
    for scale in scales_for(freqs, rate, peak):
        daughter = wavelet_spectrum(mother, scale * omega, omega0, gamma, beta)
        yield sp_fft.ifft(spectrum * daughter)[:n]


def cwt(samples, rate, mother, freqs, omega0=6.0, gamma=3.0, beta=20.0) -> np.ndarray:
    """Complex coefficients [len(freqs), N]"""
    return np.vstack(list(iter_cwt_rows(samples, rate, mother, freqs, omega0, gamma, beta)))


def cwt_spectrogram(
    w: Waveform,
    mother: WaveletMother,
    n_scales: int = 128,
    lo: float = 60.0,
    hi: float = 2000.0,
    window: int = 92,
    hop: int = 46,
    eps: float = 1e-10,
    omega0: float = 6.0,
    gamma: float = 3.0,
    beta: Optional[float] = None,
    log: bool = True,
) -> Spectrogram:
    """Frame-averaged CWT magnitude, rows ascending in pseudo-frequency"""
    mother = WaveletMother(mother)
    beta = 60.0 / gamma if beta is None else beta
    freqs = cwt_pseudo_frequencies(mother, n_scales, lo, hi)
    rows = [
        frame_average(np.abs(row), window, hop)
        for row in iter_cwt_rows(w.samples, w.rate, mother, freqs, omega0, gamma, beta)
    ]
    values = np.vstack(rows)
    if log:
        values = log_compress(values, eps)
    return Spectrogram(values, mother.kind)
