"""
Dataset manifest: recordings, event annotations and the train/validation/test
assignment, loaded from a directory of WAV + per-recording JSON files.

Two annotation layouts are accepted:

  canonical   {"recording_id", "quality", "events": [{"onset", "offset", "type"}],
               "time_unit": "ms"|"s", "split"?}
  challenge   {"record_annotation", "event_annotation": [{"start", "end", "type"}]}
              (times in ms, recording id from the file name)
"""

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from src.dsp.types import Waveform
from src.ingest.audio import REQUIRED_SUBTYPE, wav_info
from src.ingest.labels import (
    EventLabel,
    QualityLabel,
    TaskId,
    TaskLabel,
    TaskLevel,
    map_label,
    parse_event_label,
    parse_quality_label,
)
from src.utils.errors import AnnotationError, LabelError, ManifestError, WavFormatError

logger = logging.getLogger(__name__)

CACHE_NAME = "ingest_manifest.json"
_TIME_SCALE = {"ms": 1e-3, "s": 1.0}


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class RecordingMeta:
    id: str
    path: Path
    duration_s: float
    quality_label: QualityLabel
    rate: float = 0.0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise AnnotationError(f"Recording {self.id} has non-positive duration {self.duration_s}")
        object.__setattr__(self, "path", Path(self.path))
        object.__setattr__(self, "quality_label", QualityLabel(self.quality_label))


@dataclass(frozen=True)
class EventAnnotation:
    recording_id: str
    onset_s: float
    offset_s: float
    event_label: EventLabel

    def __post_init__(self):
        if not 0 <= self.onset_s < self.offset_s:
            raise AnnotationError(
                f"Event of {self.recording_id} needs 0 <= onset < offset, "
                f"got [{self.onset_s}, {self.offset_s}]"
            )
        object.__setattr__(self, "event_label", EventLabel(self.event_label))

    def describe(self) -> str:
        return f"{self.recording_id} [{self.onset_s:.3f}s, {self.offset_s:.3f}s] {self.event_label.value}"


@dataclass(frozen=True)
class IngestIssue:
    path: str
    message: str


@dataclass(frozen=True)
class ManifestItem:
    """One classification unit: an event (Task 1) or a whole recording (Task 2)"""

    item_id: str
    recording_id: str
    raw_label: str
    split: Split
    event: Optional[EventAnnotation] = None

    def task_label(self, task: TaskId) -> TaskLabel:
        return map_label(task, self.raw_label)


@dataclass(frozen=True)
class Manifest:
    recordings: Tuple[RecordingMeta, ...] = ()
    events: Tuple[EventAnnotation, ...] = ()
    split: Mapping[str, Split] = field(default_factory=dict)
    issues: Tuple[IngestIssue, ...] = ()
    root: Optional[Path] = None
    _by_id: Mapping[str, RecordingMeta] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "issues", tuple(self.issues))
        by_id = {r.id: r for r in self.recordings}
        if len(by_id) != len(self.recordings):
            raise ManifestError("Duplicate recording ids in manifest")
        orphans = {e.recording_id for e in self.events} - set(by_id)
        if orphans:
            raise ManifestError(f"Events reference unknown recordings: {sorted(orphans)}")
        split = {k: Split(v) for k, v in dict(self.split).items()}
        unassigned = set(by_id) - set(split)
        if unassigned:
            raise ManifestError(f"Recordings without a split: {sorted(unassigned)}")
        object.__setattr__(self, "split", MappingProxyType(split))
        object.__setattr__(self, "_by_id", MappingProxyType(by_id))

    # --- queries -----------------------------------------------------------
    def recording(self, recording_id: str) -> RecordingMeta:
        try:
            return self._by_id[recording_id]
        except KeyError:
            raise ManifestError(f"Unknown recording: {recording_id}") from None

    def events_of(self, recording_id: str) -> List[EventAnnotation]:
        return [e for e in self.events if e.recording_id == recording_id]

    @property
    def event_count(self) -> int:
        return len(self.events)

    def label_histogram(self) -> pd.Series:
        counts = Counter(e.event_label.value for e in self.events)
        return pd.Series({label.value: counts.get(label.value, 0) for label in EventLabel}, name="events")

    def quality_histogram(self) -> pd.Series:
        counts = Counter(r.quality_label.value for r in self.recordings)
        return pd.Series({label.value: counts.get(label.value, 0) for label in QualityLabel}, name="recordings")

    def split_counts(self) -> pd.Series:
        counts = Counter(s.value for s in self.split.values())
        return pd.Series({s.value: counts.get(s.value, 0) for s in Split}, name="recordings")

    def items(self, level: Union[TaskLevel, str], include_pq_events: bool = True) -> List[ManifestItem]:
        level = TaskLevel(level)
        out: List[ManifestItem] = []
        for rec in self.recordings:
            split = self.split[rec.id]
            if level is TaskLevel.RECORDING:
                out.append(ManifestItem(rec.id, rec.id, rec.quality_label.value, split))
                continue
            if not include_pq_events and rec.quality_label is QualityLabel.PQ:
                continue
            ordered = sorted(self.events_of(rec.id), key=lambda e: (e.onset_s, e.offset_s))
            for k, ev in enumerate(ordered):
                out.append(ManifestItem(f"{rec.id}_{k:03d}", rec.id, ev.event_label.value, split, ev))
        return out

    def items_for_task(
        self, task: Union[TaskId, str], include_pq_events: bool = True
    ) -> List[Tuple[ManifestItem, TaskLabel]]:
        task = TaskId(task)
        return [(item, item.task_label(task)) for item in self.items(task.level, include_pq_events)]

    # --- serialization -----------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": 1,
            "root": str(self.root) if self.root else None,
            "recordings": [
                {
                    "id": r.id,
                    "path": str(r.path),
                    "duration_s": r.duration_s,
                    "quality_label": r.quality_label.value,
                    "rate": r.rate,
                }
                for r in self.recordings
            ],
            "events": [
                {
                    "recording_id": e.recording_id,
                    "onset_s": e.onset_s,
                    "offset_s": e.offset_s,
                    "event_label": e.event_label.value,
                }
                for e in self.events
            ],
            "split": {k: v.value for k, v in self.split.items()},
            "issues": [{"path": i.path, "message": i.message} for i in self.issues],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Manifest":
        try:
            return cls(
                recordings=tuple(RecordingMeta(**r) for r in data["recordings"]),
                events=tuple(EventAnnotation(**e) for e in data["events"]),
                split=data["split"],
                issues=tuple(IngestIssue(**i) for i in data.get("issues", [])),
                root=Path(data["root"]) if data.get("root") else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"Malformed manifest cache: {e}") from e


# --- annotation parsing ----------------------------------------------------


@dataclass
class _Parsed:
    recording: Optional[RecordingMeta] = None
    events: List[EventAnnotation] = field(default_factory=list)
    issues: List[IngestIssue] = field(default_factory=list)
    split: Optional[Split] = None


def _read_annotation(path: Path, default_unit: str) -> Dict[str, Any]:
    """Normalize either annotation layout to {id, quality, events[(on, off, label)], split}"""
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"{path.name}: cannot parse annotation JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ManifestError(f"{path.name}: annotation must be a JSON object")

    try:
        if "record_annotation" in doc:
            recording_id = str(doc.get("recording_id", path.stem))
            quality = parse_quality_label(doc["record_annotation"])
            unit = doc.get("time_unit", "ms")
            raw_events = [(ev["start"], ev["end"], ev["type"]) for ev in doc.get("event_annotation", [])]
        else:
            recording_id = str(doc["recording_id"])
            quality = parse_quality_label(doc["quality"])
            unit = doc.get("time_unit", default_unit)
            raw_events = [(ev["onset"], ev["offset"], ev["type"]) for ev in doc.get("events", [])]
        if unit not in _TIME_SCALE:
            raise ManifestError(f"{path.name}: unknown time_unit {unit!r}")
        scale = _TIME_SCALE[unit]
        events = [(float(on) * scale, float(off) * scale, parse_event_label(label)) for on, off, label in raw_events]
        split = Split(doc["split"]) if doc.get("split") else None
    except (KeyError, TypeError, ValueError) as e:
        # LabelError is a ValueError: an unknown label makes the file malformed
        reason = str(e) if isinstance(e, LabelError) else f"{type(e).__name__}: {e}"
        raise ManifestError(f"{path.name}: malformed annotation ({reason})") from e

    return {"id": recording_id, "quality": quality, "events": events, "split": split}


def _load_one(json_path: Path, default_unit: str) -> _Parsed:
    ann = _read_annotation(json_path, default_unit)
    parsed = _Parsed(split=ann["split"])
    wav_path = json_path.with_suffix(".wav")
    if not wav_path.exists():
        parsed.issues.append(IngestIssue(str(wav_path), "missing WAV for annotation"))
        return parsed
    try:
        info = wav_info(wav_path)
        if info.subtype != REQUIRED_SUBTYPE:
            raise WavFormatError(f"expected {REQUIRED_SUBTYPE}, found {info.subtype}")
        if info.frames == 0:
            raise WavFormatError("no samples")
    except WavFormatError as e:
        parsed.issues.append(IngestIssue(str(wav_path), f"corrupt WAV: {e}"))
        return parsed

    rate = float(info.samplerate)
    duration = info.frames / rate
    parsed.recording = RecordingMeta(ann["id"], wav_path, duration, ann["quality"], rate)

    for onset, offset, label in ann["events"]:
        where = f"{ann['id']} [{onset:.3f}s, {offset:.3f}s]"
        if offset > duration + 1.0 / rate:
            message = f"annotation {where} ends after the recording ({duration:.3f}s)"
        else:
            offset = min(offset, duration)
            if 0 <= onset < offset:
                parsed.events.append(EventAnnotation(ann["id"], onset, offset, label))
                continue
            message = f"annotation {where} has onset >= offset"
        logger.warning("Rejected %s", message)
        parsed.issues.append(IngestIssue(str(json_path), f"rejected {message}"))
    return parsed


def assign_splits(
    recordings: Sequence[RecordingMeta],
    explicit: Mapping[str, Split],
    validation_fraction: float = 0.2,
    seed: int = 0,
) -> Dict[str, Split]:
    """
    Keep explicit assignments; split the rest train/validation by recording,
    stratified on the recording label when every class has two members.
    """
    split: Dict[str, Split] = {k: Split(v) for k, v in explicit.items()}
    rest = [r for r in recordings if r.id not in split]
    if len(rest) < 2:
        split.update({r.id: Split.TRAIN for r in rest})
        return split

    ids = [r.id for r in rest]
    labels = [r.quality_label.value for r in rest]
    try:
        train_ids, val_ids = train_test_split(
            ids, test_size=validation_fraction, random_state=seed, stratify=labels
        )
    except ValueError:
        logger.debug("Stratified split not possible for %d recordings, splitting unstratified", len(ids))
        train_ids, val_ids = train_test_split(ids, test_size=validation_fraction, random_state=seed)
    split.update({i: Split.TRAIN for i in train_ids})
    split.update({i: Split.VALIDATION for i in val_ids})
    return split


def load_manifest(
    root: Union[str, Path],
    default_time_unit: str = "ms",
    validation_fraction: float = 0.2,
    split_seed: int = 0,
    workers: int = 1,
) -> Manifest:
    """Parse every annotation under `root` (non-recursive)"""
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"Dataset root {root} is not a directory")

    json_paths = sorted(p for p in root.glob("*.json") if p.name != CACHE_NAME)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parsed = list(pool.map(lambda p: _load_one(p, default_time_unit), json_paths))

    recordings: List[RecordingMeta] = []
    events: List[EventAnnotation] = []
    issues: List[IngestIssue] = []
    explicit: Dict[str, Split] = {}
    for item in parsed:
        issues.extend(item.issues)
        if item.recording is None:
            continue
        recordings.append(item.recording)
        events.extend(item.events)
        if item.split is not None:
            explicit[item.recording.id] = item.split

    annotated = {p.stem for p in json_paths}
    for wav in sorted(root.glob("*.wav")):
        if wav.stem not in annotated:
            issues.append(IngestIssue(str(wav), "WAV without annotation"))

    split = assign_splits(recordings, explicit, validation_fraction, split_seed)
    manifest = Manifest(tuple(recordings), tuple(events), split, tuple(issues), root)
    logger.info(
        "Loaded manifest from %s: %d recordings, %d events, %d issues",
        root,
        len(recordings),
        len(events),
        len(issues),
    )
    for issue in issues:
        logger.warning("%s: %s", Path(issue.path).name, issue.message)
    return manifest


def save_manifest_cache(manifest: Manifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"Cannot write manifest cache {path}: {e}") from e
    return path


def load_manifest_cache(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Cannot read manifest cache {path}: {e}") from e
    return Manifest.from_dict(data)


def slice_event(wave: Waveform, ev: EventAnnotation) -> Waveform:
    """Cut round((offset - onset) * rate) samples starting at round(onset * rate)"""
    start = int(round(ev.onset_s * wave.rate))
    n = int(round((ev.offset_s - ev.onset_s) * wave.rate))
    overrun = start + n - len(wave)
    if overrun == 1:
        n -= 1
    if start >= len(wave) or n < 1 or overrun > 1:
        raise AnnotationError(f"Event {ev.describe()} lies outside the {wave.duration_s:.3f}s waveform")
    return Waveform(np.array(wave.samples[start : start + n]), wave.rate)
