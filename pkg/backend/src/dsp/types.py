"""
Signal containers shared by the front end, ingest and the feature cache.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from src.ingest.labels import TaskLabel
from src.utils.errors import ShapeError


class SpectrogramKind(str, Enum):
    GA = "GA"  # gammatone
    WA = "WA"  # wavelet, analytic Morlet
    WM = "WM"  # wavelet, generalized Morse


KIND_ORDER = (SpectrogramKind.GA, SpectrogramKind.WA, SpectrogramKind.WM)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"Waveform must be mono 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise ShapeError("Waveform is empty")
        if not self.rate > 0:
            raise ShapeError(f"Sample rate must be positive, got {self.rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray
    kind: SpectrogramKind

    def __post_init__(self):
        kind = SpectrogramKind(self.kind)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"Spectrogram must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError(f"{kind.value} spectrogram contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)

    @property
    def F(self) -> int:
        return int(self.values.shape[0])

    @property
    def T(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class FeatureTriple:
    ga: Spectrogram
    wa: Spectrogram
    wm: Spectrogram
    label: Optional[TaskLabel] = None
    item_id: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {self.ga.values.shape, self.wa.values.shape, self.wm.values.shape}
        if len(shapes) != 1:
            raise ShapeError(f"FeatureTriple spectrograms differ in shape: {sorted(shapes)}")

    @property
    def shape(self):
        return self.ga.values.shape

    def get(self, kind: SpectrogramKind) -> Spectrogram:
        return {SpectrogramKind.GA: self.ga, SpectrogramKind.WA: self.wa, SpectrogramKind.WM: self.wm}[
            SpectrogramKind(kind)
        ]

    def stack(self) -> np.ndarray:
        """[3, F, T] in GA, WA, WM order"""
        return np.stack([self.get(kind).values for kind in KIND_ORDER])
