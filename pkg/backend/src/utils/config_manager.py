#!/usr/bin/env python
"""
Configuration manager for respscope
Loads the pipeline and system-variant YAML files and validates them into
typed settings objects.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.dsp.types import SpectrogramKind
from src.ingest.labels import TaskId
from src.model.config import SystemConfig, Variant
from src.utils.errors import ConfigError, DataIOError

logger = logging.getLogger(__name__)

load_dotenv()

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FrontendConfig(_Section):
    """Waveform -> spectrogram settings"""

    target_rate: int = Field(4000, gt=0)
    band_lo: float = Field(60.0, gt=0)
    band_hi: float = Field(2000.0, gt=0)
    filter_order: int = Field(4, ge=1)
    event_duration_s: float = Field(10.0, gt=0)
    recording_duration_s: float = Field(15.36, gt=0)
    n_bins: int = Field(128, ge=2)
    event_frames: int = Field(155, ge=2)
    recording_frames: int = Field(512, ge=2)
    frame_window: int = Field(92, ge=1)
    frame_hop: int = Field(46, ge=1)
    log_epsilon: float = Field(1e-10, gt=0)
    gammatone_order: int = Field(4, ge=1)
    gammatone_power: bool = True
    log_compress: bool = True
    amor_omega0: float = Field(6.0, gt=0)
    morse_gamma: float = Field(3.0, gt=0)
    morse_time_bandwidth: float = Field(60.0, gt=0)

    @model_validator(mode="after")
    def _band(self):
        if not self.band_lo < self.band_hi:
            raise ValueError(f"band_lo ({self.band_lo}) must be below band_hi ({self.band_hi})")
        return self

    @property
    def morse_beta(self) -> float:
        return self.morse_time_bandwidth / self.morse_gamma


class AugmentConfig(_Section):
    batch_size: int = Field(32, ge=1)
    mixup: bool = True
    crop_bins: int = Field(10, ge=0)
    seed: int = 0


class ObjectiveConfig(_Section):
    margin: float = Field(1.0, gt=0)
    lambda_reg: float = Field(1e-4, ge=0)
    pairing: Literal["auto", "all_pairs", "derangement"] = "auto"
    all_pairs_max: int = Field(32, ge=2)
    mixup_pair_label: Literal["dominant", "exclude"] = "dominant"


class IngestConfig(_Section):
    include_pq_events: bool = True
    validation_fraction: float = Field(0.2, gt=0, lt=1)
    split_seed: int = 0
    default_time_unit: Literal["ms", "s"] = "ms"


class TrainConfig(_Section):
    lr: float = Field(1e-4, gt=0)
    epochs: int = Field(100, ge=1)
    seed: int = 0
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    steps_per_epoch: Optional[int] = Field(None, ge=1)
    workers: int = Field(1, ge=1)
    prefetch: int = Field(4, ge=1)
    eval_batch_size: int = Field(64, ge=1)
    system: SystemConfig = SystemConfig()
    augmentation: AugmentConfig = AugmentConfig()
    objectives: ObjectiveConfig = ObjectiveConfig()

    @model_validator(mode="after")
    def _batch_divisible(self):
        classes = self.system.num_classes
        if self.augmentation.batch_size % classes:
            raise ValueError(
                f"batch_size {self.augmentation.batch_size} is not divisible by the "
                f"{classes} classes of {self.system.task.value}"
            )
        return self

    @property
    def batch_size(self) -> int:
        return self.augmentation.batch_size


class PipelineConfig(_Section):
    frontend: FrontendConfig = FrontendConfig()
    augmentation: AugmentConfig = AugmentConfig()
    objectives: ObjectiveConfig = ObjectiveConfig()
    training: Dict[str, Any] = Field(default_factory=dict)
    ingest: IngestConfig = IngestConfig()


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigManager:
    """Loads pipeline settings and system presets"""

    def __init__(self, config_dir: Optional[Union[str, Path]] = None):
        self.config_dir = Path(config_dir or os.getenv("RESPSCOPE_CONFIG_DIR") or DEFAULT_CONFIG_DIR)
        self.development_mode = os.getenv("DEBUG", "false").lower() == "true"
        self.pipeline_raw = self._load_config("pipeline_config.yaml", self._get_default_pipeline_config)
        self.variants_raw = self._load_config("system_variants.yaml", self._get_default_variants_config)
        self._pipeline: Optional[PipelineConfig] = None

    def _load_config(self, filename: str, fallback) -> Dict[str, Any]:
        """Load one YAML file, falling back to built-in defaults"""
        path = self.config_dir / filename
        try:
            with open(path, "r", encoding="utf-8") as file:
                return yaml.safe_load(file) or {}
        except FileNotFoundError:
            logger.error(f"Config file not found: {path}")
            return fallback()
        except yaml.YAMLError as e:
            logger.error(f"Error parsing config file {path}: {e}")
            return fallback()

    @staticmethod
    def _get_default_pipeline_config() -> Dict[str, Any]:
        return PipelineConfig().model_dump(mode="json")

    @staticmethod
    def _get_default_variants_config() -> Dict[str, Any]:
        return {
            "variants": {
                "individual": {"combiner": None, "attention": True, "alpha": 1.0, "beta": 0.0, "gamma": 0.0},
                "system_i": {
                    "combiner": "concat",
                    "attention": False,
                    "bypass_reduction": "flatten",
                    "alpha": 1 / 3,
                    "beta": 1.0,
                    "gamma": 0.0,
                },
                "system_ii": {"combiner": "concat", "attention": True, "alpha": 1 / 3, "beta": 1.0, "gamma": 0.0},
                "system_iii": {"combiner": "linear", "attention": True, "alpha": 1 / 3, "beta": 1.0, "gamma": 1.0},
            },
            "development": {"enabled": False},
        }

    # --- typed accessors ---------------------------------------------------
    def pipeline(self) -> PipelineConfig:
        if self._pipeline is None:
            self._pipeline = _validate(PipelineConfig, self.pipeline_raw, "pipeline_config.yaml")
        return self._pipeline

    def frontend(self) -> FrontendConfig:
        return self.pipeline().frontend

    def ingest(self) -> IngestConfig:
        return self.pipeline().ingest

    def _development_overrides(self) -> Dict[str, Any]:
        dev = self.variants_raw.get("development") or {}
        if self.development_mode or dev.get("enabled", False):
            return dev.get("system_overrides") or {}
        return {}

    def system_config(
        self,
        variant: Union[Variant, str],
        task: Union[TaskId, str],
        branch: Optional[Union[SpectrogramKind, str]] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> SystemConfig:
        variant = Variant(variant)
        presets = self.variants_raw.get("variants") or {}
        values: Dict[str, Any] = dict(presets.get(variant.value) or {})
        if not values:
            logger.warning(f"No preset for {variant.value} in system_variants.yaml, using built-in values")
            values = self._get_default_variants_config()["variants"][variant.value]
        values = deep_merge(values, self._development_overrides())
        values = deep_merge(values, overrides or {})
        values.update(variant=variant.value, task=TaskId(task).value)
        if branch is not None:
            values["branch"] = SpectrogramKind(branch).value
        return _validate(SystemConfig, values, f"system preset {variant.value}")

    def train_config(self, run_config: Optional[Dict[str, Any]] = None) -> TrainConfig:
        """Merge a (partial) run config over the pipeline defaults"""
        run_config = run_config or {}
        pipeline = self.pipeline()
        system_section = dict(run_config.get("system") or {})
        try:
            variant = system_section.pop("variant", Variant.SYSTEM_III.value)
            task = system_section.pop("task", TaskId.T1_1.value)
            branch = system_section.pop("branch", None)
            system = self.system_config(variant, task, branch, overrides=system_section)
        except ValueError as e:
            raise ConfigError(f"Invalid system section: {e}") from e

        values = deep_merge(pipeline.training, run_config.get("training") or {})
        values["augmentation"] = deep_merge(
            pipeline.augmentation.model_dump(mode="json"), run_config.get("augmentation") or {}
        )
        values["objectives"] = deep_merge(
            pipeline.objectives.model_dump(mode="json"), run_config.get("objectives") or {}
        )
        values["system"] = system.model_dump(mode="json")
        workers = os.getenv("RESPSCOPE_WORKERS")
        if workers and "workers" not in (run_config.get("training") or {}):
            values["workers"] = int(workers)
        return _validate(TrainConfig, values, "run config")

    def load_run_config(self, path: Union[str, Path]) -> TrainConfig:
        """Read a JSON or YAML run config and merge it over the defaults"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"Cannot read run config {path}: {e}") from e
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Run config {path} is not valid JSON/YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Run config {path} must be a mapping")
        return self.train_config(data)


def _validate(model, values: Dict[str, Any], source: str):
    try:
        return model.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid {source}: {e}") from e


_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get the process-wide ConfigManager"""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager
