"""
Augmented batch assembly.

Each batch is a pure function of (seed, batch_index): oversample, mixup with
a partner drawn from the same batch, then crop-and-resize. All three
spectrogram kinds of an item share the mixup ratio and the crop window.
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from src.augment.sampling import balanced_oversample
from src.augment.transforms import crop_window, one_hot, random_crop
from src.utils.config_manager import AugmentConfig
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AugmentedBatch:
    inputs: np.ndarray  # [B, 3, F, T]
    soft_labels: np.ndarray  # [B, C]
    indices: np.ndarray  # pool index of each item before mixup
    hard_labels: np.ndarray
    mix_partner: Optional[np.ndarray] = None  # batch position of each item's partner
    mix_ratio: Optional[np.ndarray] = None
    batch_index: int = 0

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dominant_labels(self) -> np.ndarray:
        """Class with the larger mixup share (own class on ties)"""
        if self.mix_partner is None:
            return self.hard_labels
        partner_labels = self.hard_labels[self.mix_partner]
        return np.where(self.mix_ratio >= 0.5, self.hard_labels, partner_labels)

    @property
    def mixed_mask(self) -> np.ndarray:
        """Items whose soft label blends two different classes"""
        if self.mix_partner is None:
            return np.zeros(len(self), dtype=bool)
        partner_labels = self.hard_labels[self.mix_partner]
        return (partner_labels != self.hard_labels) & (self.mix_ratio > 0.0) & (self.mix_ratio < 1.0)


class BatchBuilder:
    """Builds reproducible augmented batches from a stacked feature pool"""

    def __init__(
        self,
        inputs: np.ndarray,
        labels: Sequence[int],
        num_classes: int,
        cfg: Optional[AugmentConfig] = None,
        seed: Optional[int] = None,
        class_names: Optional[Sequence[str]] = None,
    ):
        self.inputs = np.asarray(inputs)
        if self.inputs.ndim != 4 or self.inputs.shape[1] != 3:
            raise ShapeError(f"Feature pool must be [N, 3, F, T], got {self.inputs.shape}")
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ShapeError(f"{self.labels.shape[0]} labels for {self.inputs.shape[0]} feature triples")
        self.num_classes = num_classes
        self.cfg = cfg or AugmentConfig()
        self.seed = self.cfg.seed if seed is None else seed
        self.class_names = class_names

    @property
    def batch_size(self) -> int:
        return self.cfg.batch_size

    def steps_per_epoch(self) -> int:
        return max(1, self.inputs.shape[0] // self.batch_size)

    def build(self, batch_index: int) -> AugmentedBatch:
        rng = np.random.default_rng([self.seed, batch_index])
        B = self.batch_size
        idx = balanced_oversample(self.labels, B, self.num_classes, rng, self.class_names)
        x = self.inputs[idx].astype(np.float64)
        hard = self.labels[idx]
        y = one_hot(hard, self.num_classes)

        partner = ratio = None
        if self.cfg.mixup:
            partner = rng.permutation(B)
            ratio = rng.uniform(0.0, 1.0, size=B)
            r = ratio[:, None, None, None]
            x = r * x + (1.0 - r) * x[partner]
            y = ratio[:, None] * y + (1.0 - ratio[:, None]) * y[partner]

        d = self.cfg.crop_bins
        if d > 0:
            F, T = x.shape[-2:]
            for i in range(B):
                window = crop_window((F, T), d, d, rng)
                x[i] = random_crop(x[i], d, d, window=window)

        logger.debug("Built batch %d: classes %s", batch_index, np.bincount(hard, minlength=self.num_classes))
        return AugmentedBatch(x, y, idx, hard, partner, ratio, batch_index)


class BatchPrefetcher:
    """
    Builds batches on a thread pool and yields them in index order, keeping
    at most `prefetch` batches in flight.
    """

    def __init__(self, builder: BatchBuilder, workers: int = 1, prefetch: int = 4):
        self.builder = builder
        self.workers = max(1, workers)
        self.prefetch = max(1, prefetch)

    def iterate(self, batch_indices: Iterable[int]) -> Iterator[AugmentedBatch]:
        indices = iter(batch_indices)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            pending = deque()
            for index in indices:
                pending.append(pool.submit(self.builder.build, index))
                if len(pending) >= self.prefetch:
                    break
            while pending:
                batch = pending.popleft().result()
                nxt = next(indices, None)
                if nxt is not None:
                    pending.append(pool.submit(self.builder.build, nxt))
                yield batch
