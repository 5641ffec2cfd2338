"""
Class-balanced oversampling.
"""

from typing import Optional, Sequence

import numpy as np

from src.utils.errors import ValidationFailure


def balanced_oversample(
    labels: Sequence[int],
    batch: int,
    num_classes: int,
    rng: np.random.Generator,
    class_names: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """
    Draw batch / num_classes pool indices per class, with replacement, and
    return them in shuffled order.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if batch % num_classes:
        raise ValidationFailure(f"Batch size {batch} is not divisible by {num_classes} classes")
    per_class = batch // num_classes

    chosen = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            name = class_names[c] if class_names else str(c)
            raise ValidationFailure(f"Class {name!r} has no examples to oversample")
        chosen.append(rng.choice(members, size=per_class, replace=True))
    return rng.permutation(np.concatenate(chosen))
