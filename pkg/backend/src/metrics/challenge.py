"""
Challenge scoring from confusion matrices.

    SE = sum of correct non-Normal / all non-Normal samples
    SP = correct Normal / all Normal samples
    AS = (SE + SP) / 2, HS = 2 SE SP / (SE + SP), Score = (AS + HS) / 2

All values are percentages at full precision; rounding happens only when
reporting.
"""

import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.metrics import confusion_matrix

from src.ingest.labels import NORMAL_INDEX, TaskId
from src.utils.errors import MetricUndefinedError, ShapeError

logger = logging.getLogger(__name__)

METRIC_NAMES = ("SE", "SP", "AS", "HS", "Score")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predictions"""

    counts: np.ndarray
    normal_index: int = NORMAL_INDEX

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ShapeError(f"Confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ShapeError("Confusion matrix counts must be non-negative")
        if not 0 <= self.normal_index < counts.shape[0]:
            raise ShapeError(f"Normal index {self.normal_index} outside {counts.shape[0]} classes")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(
        cls, true: Sequence[int], pred: Sequence[int], num_classes: int, normal_index: int = NORMAL_INDEX
    ) -> "ConfusionMatrix":
        counts = confusion_matrix(true, pred, labels=list(range(num_classes)))
        return cls(counts, normal_index)

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_list(self) -> List[List[int]]:
        return self.counts.tolist()


def sensitivity(cm: ConfusionMatrix) -> float:
    abnormal = [i for i in range(cm.num_classes) if i != cm.normal_index]
    denominator = cm.counts[abnormal].sum()
    if denominator == 0:
        raise MetricUndefinedError("SE is undefined: no non-Normal samples")
    return 100.0 * cm.counts[abnormal, abnormal].sum() / denominator


def specificity(cm: ConfusionMatrix) -> float:
    n = cm.normal_index
    denominator = cm.counts[n].sum()
    if denominator == 0:
        raise MetricUndefinedError("SP is undefined: no Normal samples")
    return 100.0 * cm.counts[n, n] / denominator


def scores(se: float, sp: float) -> Tuple[float, float, float]:
    """(AS, HS, Score); HS is 0 when SE + SP = 0"""
    as_ = (se + sp) / 2.0
    hs = 2.0 * se * sp / (se + sp) if se + sp > 0 else 0.0
    return as_, hs, (as_ + hs) / 2.0


def round_half_even(value: Optional[float], digits: int = 1) -> Optional[float]:
    if value is None:
        return None
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_EVEN))


class MetricReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    se: Optional[float] = Field(None, alias="SE")
    sp: Optional[float] = Field(None, alias="SP")
    as_: Optional[float] = Field(None, alias="AS")
    hs: Optional[float] = Field(None, alias="HS")
    score: Optional[float] = Field(None, alias="Score")
    undefined: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _ranges(self):
        for name, value in self.raw().items():
            if value is not None and not -1e-9 <= value <= 100.0 + 1e-9:
                raise ValueError(f"{name} = {value} is outside [0, 100]")
        if self.hs is not None and self.as_ is not None and self.hs > self.as_ + 1e-9:
            raise ValueError(f"HS ({self.hs}) exceeds AS ({self.as_})")
        return self

    @classmethod
    def from_se_sp(cls, se: Optional[float], sp: Optional[float], undefined: Sequence[str] = ()) -> "MetricReport":
        if se is None or sp is None:
            return cls(se=se, sp=sp, undefined=list(undefined))
        as_, hs, score = scores(se, sp)
        return cls(se=se, sp=sp, as_=as_, hs=hs, score=score, undefined=list(undefined))

    def raw(self) -> Dict[str, Optional[float]]:
        return {"SE": self.se, "SP": self.sp, "AS": self.as_, "HS": self.hs, "Score": self.score}

    def rounded(self, digits: int = 1) -> Dict[str, Optional[float]]:
        return {k: round_half_even(v, digits) for k, v in self.raw().items()}

    def as_dict(self) -> Dict[str, object]:
        return {"raw": self.raw(), "rounded": self.rounded(), "undefined": list(self.undefined)}


def metric_report(cm: ConfusionMatrix) -> MetricReport:
    """SE/SP/AS/HS/Score; undefined SE or SP is recorded instead of raised"""
    values: Dict[str, Optional[float]] = {}
    undefined: List[str] = []
    for name, fn in (("SE", sensitivity), ("SP", specificity)):
        try:
            values[name] = fn(cm)
        except MetricUndefinedError as e:
            logger.warning(str(e))
            values[name] = None
            undefined.append(name)
    if undefined:
        undefined.extend(["AS", "HS", "Score"])
    return MetricReport.from_se_sp(values["SE"], values["SP"], undefined)


def evaluate_predictions(
    true: Sequence[int], pred: Sequence[int], task: TaskId
) -> Tuple[ConfusionMatrix, MetricReport]:
    task = TaskId(task)
    cm = ConfusionMatrix.from_labels(true, pred, task.num_classes)
    return cm, metric_report(cm)
