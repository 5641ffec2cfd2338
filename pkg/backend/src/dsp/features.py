"""
Feature extraction pipeline and on-disk feature cache.

resample -> duplicate-pad -> band-pass -> {GA, WA, WM} -> rescale
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from src.dsp.filters import bandpass, pad_duplicate, resample
from src.dsp.gammatone import gammatone_spectrogram
from src.dsp.grid import rescale
from src.dsp.types import KIND_ORDER, FeatureTriple, Spectrogram, SpectrogramKind, Waveform
from src.dsp.wavelets import WaveletMother, cwt_spectrogram
from src.ingest.audio import read_wav
from src.ingest.labels import TaskId, TaskLabel, TaskLevel
from src.ingest.manifest import Manifest, slice_event
from src.utils.config_manager import FrontendConfig
from src.utils.errors import FeatureStoreError, LabelError
from src.utils.tensor_io import read_container, write_container

logger = logging.getLogger(__name__)

FEATURE_SUFFIX = ".rspk"
FEATURE_INDEX = "manifest.json"


def condition_waveform(w: Waveform, level: TaskLevel, cfg: FrontendConfig) -> Waveform:
    """Resample, duplicate-pad to the level's duration, then band-pass"""
    level = TaskLevel(level)
    target_s = cfg.event_duration_s if level is TaskLevel.EVENT else cfg.recording_duration_s
    w = resample(w, cfg.target_rate)
    w = pad_duplicate(w, target_s)
    return bandpass(w, cfg.band_lo, cfg.band_hi, cfg.filter_order)


def extract_features(
    w: Waveform,
    level: Union[TaskLevel, str],
    cfg: Optional[FrontendConfig] = None,
    item_id: str = "",
    metadata: Optional[dict] = None,
    label: Optional[TaskLabel] = None,
) -> FeatureTriple:
    """Three fixed-size spectrograms (GA, WA, WM) for one waveform"""
    cfg = cfg or FrontendConfig()
    level = TaskLevel(level)
    conditioned = condition_waveform(w, level, cfg)
    frames = cfg.event_frames if level is TaskLevel.EVENT else cfg.recording_frames

    common = dict(
        lo=cfg.band_lo,
        hi=min(cfg.band_hi, cfg.target_rate / 2.0),
        window=cfg.frame_window,
        hop=cfg.frame_hop,
        eps=cfg.log_epsilon,
        log=cfg.log_compress,
    )
    ga = gammatone_spectrogram(
        conditioned, n_channels=cfg.n_bins, order=cfg.gammatone_order, power=cfg.gammatone_power, **common
    )
    wavelet_args = dict(n_scales=cfg.n_bins, omega0=cfg.amor_omega0, gamma=cfg.morse_gamma, beta=cfg.morse_beta)
    wa = cwt_spectrogram(conditioned, WaveletMother.AMOR, **wavelet_args, **common)
    wm = cwt_spectrogram(conditioned, WaveletMother.MORSE, **wavelet_args, **common)

    return FeatureTriple(
        ga=rescale(ga, cfg.n_bins, frames),
        wa=rescale(wa, cfg.n_bins, frames),
        wm=rescale(wm, cfg.n_bins, frames),
        label=label,
        item_id=item_id,
        metadata=dict(metadata or {}),
    )


def standardize(grid: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance over the whole grid (constant grids -> zeros)"""
    grid = np.asarray(grid, dtype=np.float64)
    std = grid.std()
    centered = grid - grid.mean()
    return centered / std if std > 1e-12 else centered


# --- feature cache ---------------------------------------------------------


def save_feature_triple(path: Union[str, Path], triple: FeatureTriple) -> Path:
    entries = {kind.value: triple.get(kind).values for kind in KIND_ORDER}
    kinds = {kind.value: kind.value for kind in KIND_ORDER}
    metadata = {"item_id": triple.item_id, **triple.metadata}
    if triple.label is not None:
        metadata["label"] = {"task": triple.label.task.value, "class_index": triple.label.class_index}
    return write_container(path, entries, metadata, kinds)


def load_feature_triple(path: Union[str, Path]) -> FeatureTriple:
    arrays, header = read_container(path)
    missing = [k.value for k in KIND_ORDER if k.value not in arrays]
    if missing:
        raise FeatureStoreError(f"{path} lacks spectrogram entries {missing}")
    metadata = dict(header.get("metadata", {}))
    stored_label = metadata.pop("label", None)
    label = TaskLabel(TaskId(stored_label["task"]), int(stored_label["class_index"])) if stored_label else None
    item_id = metadata.pop("item_id", Path(path).stem)
    return FeatureTriple(
        ga=Spectrogram(arrays["GA"], SpectrogramKind.GA),
        wa=Spectrogram(arrays["WA"], SpectrogramKind.WA),
        wm=Spectrogram(arrays["WM"], SpectrogramKind.WM),
        label=label,
        item_id=item_id,
        metadata=metadata,
    )


def extract_to_cache(
    manifest: Manifest,
    level: Union[TaskLevel, str],
    out_dir: Union[str, Path],
    cfg: Optional[FrontendConfig] = None,
    include_pq_events: bool = True,
    workers: int = 1,
    task: Optional[Union[TaskId, str]] = None,
) -> List[Dict[str, object]]:
    """
    Extract every item of a manifest at one level into `out_dir`, one file per
    item, plus an index (manifest.json) with raw labels and splits.

    With a task, each triple and index entry also carries the mapped task label.
    """
    cfg = cfg or FrontendConfig()
    level = TaskLevel(level)
    task = TaskId(task) if task is not None else None
    if task is not None and task.level is not level:
        raise LabelError(f"{task.display_name} needs {task.level.value}-level items, not {level.value}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = manifest.items(level, include_pq_events=include_pq_events)

    def work(item):
        wave = read_wav(manifest.recording(item.recording_id).path)
        if item.event is not None:
            wave = slice_event(wave, item.event)
        meta = {
            "recording_id": item.recording_id,
            "raw_label": item.raw_label,
            "split": item.split.value,
            "level": level.value,
        }
        label = item.task_label(task) if task is not None else None
        triple = extract_features(wave, level, cfg, item_id=item.item_id, metadata=meta, label=label)
        save_feature_triple(out_dir / f"{item.item_id}{FEATURE_SUFFIX}", triple)
        entry = {"item_id": item.item_id, "file": f"{item.item_id}{FEATURE_SUFFIX}", **meta}
        if label is not None:
            entry["label"] = {"task": task.value, "class_index": label.class_index, "name": label.name}
        return entry

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        index = list(pool.map(work, items))

    index_doc = {
        "level": level.value,
        "task": task.value if task is not None else None,
        "frontend": cfg.model_dump(mode="json"),
        "items": index,
    }
    (out_dir / FEATURE_INDEX).write_text(json.dumps(index_doc, indent=2), encoding="utf-8")
    logger.info("Extracted %d %s-level feature triples into %s", len(index), level.value, out_dir)
    return index
