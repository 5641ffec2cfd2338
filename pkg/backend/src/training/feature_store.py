"""
Feature cache reader: stacks cached triples of one split into a training or
evaluation pool with task labels.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.dsp.features import FEATURE_INDEX, load_feature_triple, standardize
from src.ingest.labels import TaskId, TaskLevel, map_label
from src.utils.errors import FeatureStoreError, LabelError

logger = logging.getLogger(__name__)


def read_feature_index(features_dir: Union[str, Path]) -> Dict[str, object]:
    features_dir = Path(features_dir)
    index_path = features_dir / FEATURE_INDEX
    if not features_dir.is_dir():
        raise FeatureStoreError(f"Feature directory {features_dir} does not exist; run `extract` first")
    try:
        return json.loads(index_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FeatureStoreError(f"{index_path} is missing; run `extract` into {features_dir}") from None
    except (OSError, json.JSONDecodeError) as e:
        raise FeatureStoreError(f"Cannot read feature index {index_path}: {e}") from e


@dataclass
class FeatureSet:
    """Standardized inputs [N, 3, F, T] (GA, WA, WM) with task labels"""

    task: TaskId
    inputs: np.ndarray
    labels: np.ndarray
    item_ids: List[str] = field(default_factory=list)
    splits: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self):
        return tuple(self.inputs.shape[2:])

    def class_counts(self) -> pd.Series:
        counts = np.bincount(self.labels, minlength=self.task.num_classes)
        return pd.Series(counts, index=list(self.task.class_names), name="items")

    def subset(self, split: Union[str, Sequence[str]]) -> "FeatureSet":
        wanted = {split} if isinstance(split, str) else set(split)
        keep = np.array([s in wanted for s in self.splits], dtype=bool)
        return FeatureSet(
            self.task,
            self.inputs[keep],
            self.labels[keep],
            [i for i, k in zip(self.item_ids, keep) if k],
            [s for s, k in zip(self.splits, keep) if k],
        )

    @classmethod
    def load(
        cls,
        features_dir: Union[str, Path],
        task: Union[TaskId, str],
        split: Optional[Union[str, Sequence[str]]] = None,
    ) -> "FeatureSet":
        task = TaskId(task)
        features_dir = Path(features_dir)
        index = read_feature_index(features_dir)
        level = TaskLevel(index.get("level", task.level.value))
        if level is not task.level:
            raise LabelError(
                f"{features_dir} holds {level.value}-level features; "
                f"{task.display_name} needs {task.level.value}-level"
            )

        wanted = None if split is None else ({split} if isinstance(split, str) else set(split))
        grids, labels, ids, splits = [], [], [], []
        for entry in index.get("items", []):
            if wanted is not None and entry["split"] not in wanted:
                continue
            triple = load_feature_triple(features_dir / entry["file"])
            grids.append(np.stack([standardize(g) for g in triple.stack()]).astype(np.float32))
            stored = entry.get("label")
            if stored and stored["task"] == task.value:
                labels.append(int(stored["class_index"]))
            else:
                labels.append(map_label(task, entry["raw_label"]).class_index)
            ids.append(entry["item_id"])
            splits.append(entry["split"])

        if not grids:
            raise FeatureStoreError(f"No {split or 'cached'} items found in {features_dir}")
        fs = cls(task, np.stack(grids), np.asarray(labels, dtype=np.int64), ids, splits)
        logger.info(
            "Loaded %d %s items for %s: %s",
            len(fs),
            "/".join(sorted(wanted)) if wanted else "all",
            task.display_name,
            fs.class_counts().to_dict(),
        )
        return fs
