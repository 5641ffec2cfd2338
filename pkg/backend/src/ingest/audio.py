"""
WAV reading and writing (16-bit PCM).
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from src.dsp.types import Waveform
from src.utils.errors import WavFormatError

logger = logging.getLogger(__name__)

REQUIRED_SUBTYPE = "PCM_16"


def wav_info(path: Union[str, Path]):
    try:
        return sf.info(str(path))
    except (RuntimeError, OSError) as e:
        raise WavFormatError(f"{path}: unreadable WAV ({e})") from e


def wav_duration(path: Union[str, Path]) -> float:
    info = wav_info(path)
    return info.frames / info.samplerate


def read_wav(path: Union[str, Path]) -> Waveform:
    """Decode a PCM16 WAV to a mono float waveform in [-1, 1]; stereo is averaged"""
    path = Path(path)
    info = wav_info(path)
    if info.subtype != REQUIRED_SUBTYPE:
        raise WavFormatError(f"{path.name}: expected {REQUIRED_SUBTYPE}, found {info.subtype}")
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise WavFormatError(f"{path}: cannot decode ({e})") from e
    if data.shape[0] == 0:
        raise WavFormatError(f"{path.name}: no samples")
    if data.shape[1] > 1:
        logger.debug("Downmixing %d channels in %s", data.shape[1], path.name)
    return Waveform(data.mean(axis=1), float(rate))


def write_wav(path: Union[str, Path], w: Waveform) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(w.samples, -1.0, 1.0), int(round(w.rate)), subtype=REQUIRED_SUBTYPE)
    return path
