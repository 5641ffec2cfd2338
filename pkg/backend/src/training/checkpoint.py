"""
Checkpoints: parameters, normalization buffers and Adam moments in one
RSPK1 container, with the run configuration in the header.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.model.config import SystemConfig
from src.model.system import RespiratorySystem
from src.utils.config_manager import TrainConfig
from src.utils.errors import CheckpointError, FeatureStoreError, ShapeError
from src.utils.tensor_io import read_container, write_container

logger = logging.getLogger(__name__)

FORMAT = "respscope-checkpoint/1"


def save_checkpoint(
    path: Union[str, Path],
    model: RespiratorySystem,
    train_cfg: Optional[TrainConfig] = None,
    info: Optional[Dict[str, Any]] = None,
) -> Path:
    entries: Dict[str, np.ndarray] = {}
    kinds: Dict[str, str] = {}
    adam_steps: Dict[str, int] = {}
    for name, p in model.named_parameters():
        entries[f"param:{name}"] = p.data
        kinds[f"param:{name}"] = "param"
        if p.adam.m is not None:
            entries[f"adam_m:{name}"] = p.adam.m
            entries[f"adam_v:{name}"] = p.adam.v
            kinds[f"adam_m:{name}"] = kinds[f"adam_v:{name}"] = "adam"
            adam_steps[name] = p.adam.step
    for name, buf in model.named_buffers():
        entries[f"buffer:{name}"] = buf
        kinds[f"buffer:{name}"] = "buffer"

    metadata = {
        "format": FORMAT,
        "system": model.cfg.model_dump(mode="json"),
        "train": train_cfg.model_dump(mode="json") if train_cfg else None,
        "adam_steps": adam_steps,
        "info": info or {},
    }
    try:
        return write_container(path, entries, metadata, kinds)
    except FeatureStoreError as e:
        raise CheckpointError(str(e)) from e


def load_checkpoint(
    path: Union[str, Path],
) -> Tuple[RespiratorySystem, Optional[TrainConfig], Dict[str, Any]]:
    """Rebuild the model (eval mode) and its optimizer state from a checkpoint"""
    path = Path(path)
    try:
        arrays, header = read_container(path)
    except FeatureStoreError as e:
        raise CheckpointError(f"Cannot load checkpoint: {e}") from e
    metadata = header.get("metadata", {})
    if metadata.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a respscope checkpoint")

    try:
        model = RespiratorySystem(SystemConfig.model_validate(metadata["system"]))
        model.load_state_dict(arrays)
    except (KeyError, ValueError) as e:
        reason = str(e) if isinstance(e, ShapeError) else f"{type(e).__name__}: {e}"
        raise CheckpointError(f"{path} does not match its stored architecture ({reason})") from e

    steps = metadata.get("adam_steps", {})
    for name, p in model.named_parameters():
        if name in steps:
            p.adam.m = arrays[f"adam_m:{name}"].astype(p.data.dtype)
            p.adam.v = arrays[f"adam_v:{name}"].astype(p.data.dtype)
            p.adam.step = int(steps[name])

    train_cfg = TrainConfig.model_validate(metadata["train"]) if metadata.get("train") else None
    model.eval()
    logger.info("Loaded %s checkpoint from %s", model.cfg.label, path)
    return model, train_cfg, metadata.get("info", {})
