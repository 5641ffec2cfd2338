"""
Label spaces of the four challenge tasks and the raw-label mapping.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple, Union

from src.utils.errors import LabelError


class QualityLabel(str, Enum):
    """Recording-level labels"""

    PQ = "PQ"
    N = "N"
    CAS = "CAS"
    DAS = "DAS"
    CD = "CD"


class EventLabel(str, Enum):
    """Event-level labels"""

    N = "N"
    RHO = "Rho"
    W = "W"
    STR = "Str"
    CC = "CC"
    FC = "FC"
    B = "B"


class TaskLevel(str, Enum):
    EVENT = "event"
    RECORDING = "recording"


class TaskId(str, Enum):
    """Challenge tasks: 1-x classify events, 2-x classify recordings"""

    T1_1 = "T1_1"
    T1_2 = "T1_2"
    T2_1 = "T2_1"
    T2_2 = "T2_2"

    @property
    def level(self) -> TaskLevel:
        return TaskLevel.EVENT if self.value.startswith("T1") else TaskLevel.RECORDING

    @property
    def class_names(self) -> Tuple[str, ...]:
        return TASK_CLASSES[self]

    @property
    def num_classes(self) -> int:
        return len(TASK_CLASSES[self])

    @property
    def display_name(self) -> str:
        return "Task " + self.value[1:].replace("_", "-")


# Normal is always class 0
TASK_CLASSES: Dict[TaskId, Tuple[str, ...]] = {
    TaskId.T1_1: ("Normal", "Adventitious"),
    TaskId.T1_2: tuple(label.value for label in EventLabel),
    TaskId.T2_1: ("Normal", "Adventitious", "PoorQuality"),
    TaskId.T2_2: ("N", "CAS", "DAS", "CD", "PQ"),
}

NORMAL_INDEX = 0

_EVENT_ALIASES: Dict[str, EventLabel] = {
    "n": EventLabel.N,
    "normal": EventLabel.N,
    "rho": EventLabel.RHO,
    "rhonchi": EventLabel.RHO,
    "w": EventLabel.W,
    "wheeze": EventLabel.W,
    "str": EventLabel.STR,
    "stridor": EventLabel.STR,
    "cc": EventLabel.CC,
    "coarse crackle": EventLabel.CC,
    "fc": EventLabel.FC,
    "fine crackle": EventLabel.FC,
    "b": EventLabel.B,
    "wheeze+crackle": EventLabel.B,
    "wheeze & crackle": EventLabel.B,
    "both": EventLabel.B,
}

_QUALITY_ALIASES: Dict[str, QualityLabel] = {
    "pq": QualityLabel.PQ,
    "poor quality": QualityLabel.PQ,
    "n": QualityLabel.N,
    "normal": QualityLabel.N,
    "cas": QualityLabel.CAS,
    "das": QualityLabel.DAS,
    "cd": QualityLabel.CD,
    "cas & das": QualityLabel.CD,
    "cas&das": QualityLabel.CD,
}


def parse_event_label(raw: str) -> EventLabel:
    try:
        return _EVENT_ALIASES[raw.strip().lower()]
    except KeyError:
        raise LabelError(f"Unknown event label: {raw!r}") from None


def parse_quality_label(raw: str) -> QualityLabel:
    try:
        return _QUALITY_ALIASES[raw.strip().lower()]
    except KeyError:
        raise LabelError(f"Unknown recording label: {raw!r}") from None


@dataclass(frozen=True)
class TaskLabel:
    task: TaskId
    class_index: int

    def __post_init__(self):
        if not 0 <= self.class_index < self.task.num_classes:
            raise LabelError(
                f"class_index {self.class_index} out of range for {self.task.value} "
                f"({self.task.num_classes} classes)"
            )

    @property
    def T(self) -> int:
        return self.task.num_classes

    @property
    def name(self) -> str:
        return self.task.class_names[self.class_index]


_T1_1 = {label: (0 if label is EventLabel.N else 1) for label in EventLabel}
_T2_1 = {
    QualityLabel.N: 0,
    QualityLabel.CAS: 1,
    QualityLabel.DAS: 1,
    QualityLabel.CD: 1,
    QualityLabel.PQ: 2,
}


def map_label(task: TaskId, raw: Union[EventLabel, QualityLabel, str]) -> TaskLabel:
    """
    Map a raw event or recording label onto a task's class set.

    Strings are parsed at the task's level. An enum from the other level
    raises LabelError (a TypeError).
    """
    task = TaskId(task)
    if isinstance(raw, str) and not isinstance(raw, Enum):
        raw = parse_event_label(raw) if task.level is TaskLevel.EVENT else parse_quality_label(raw)

    if task.level is TaskLevel.EVENT:
        if not isinstance(raw, EventLabel):
            raise LabelError(f"{task.value} expects an event label, got {type(raw).__name__} {raw!r}")
        if task is TaskId.T1_1:
            return TaskLabel(task, _T1_1[raw])
        return TaskLabel(task, list(EventLabel).index(raw))

    if not isinstance(raw, QualityLabel):
        raise LabelError(f"{task.value} expects a recording label, got {type(raw).__name__} {raw!r}")
    if task is TaskId.T2_1:
        return TaskLabel(task, _T2_1[raw])
    return TaskLabel(task, TASK_CLASSES[task].index(raw.value))
