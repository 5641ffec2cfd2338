"""
Shared fixtures: synthetic WAV trees, test signals and down-scaled configs.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

# Add backend to path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.dsp.types import Waveform  # noqa: E402
from src.ingest.audio import write_wav  # noqa: E402
from src.ingest.labels import TaskId  # noqa: E402
from src.model.config import AttentionSpec, BackboneConfig, SystemConfig, Variant  # noqa: E402
from src.utils.config_manager import AugmentConfig, FrontendConfig, TrainConfig  # noqa: E402

RATE = 4000

TINY_BACKBONE = BackboneConfig.model_validate(
    {
        "doub_inc": {"first": {"out_channels": 3}, "second": {"out_channels": 3}},
        "inc_res_1": {"out_channels": 4, "k": 3},
        "inc_res_2": {"out_channels": 6, "k": 3},
    }
)
TINY_ATTENTION = AttentionSpec(heads=2, key_dim=4)


def tone(freq: float, seconds: float = 1.0, rate: float = RATE, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * rate))) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


def chirp(f0: float, f1: float, seconds: float = 1.0, rate: float = RATE, amp: float = 0.5) -> Waveform:
    t = np.arange(int(round(seconds * rate))) / rate
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / seconds * t**2)
    return Waveform(amp * np.sin(phase), rate)


def noise_bursts(seconds: float = 1.0, rate: float = RATE, seed: int = 0, every_s: float = 0.2) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    x = np.zeros(n)
    width = int(0.01 * rate)
    for start in range(0, n - width, int(every_s * rate)):
        x[start : start + width] = rng.normal(scale=0.4, size=width)
    return Waveform(x, rate)


def tiny_system(
    variant: Variant = Variant.SYSTEM_III,
    task: TaskId = TaskId.T2_1,
    branch=None,
    input_shape=(16, 16),
    **overrides,
) -> SystemConfig:
    return SystemConfig.preset(
        variant,
        task,
        branch,
        input_shape=input_shape,
        backbone=overrides.pop("backbone", TINY_BACKBONE),
        attention_spec=overrides.pop("attention_spec", TINY_ATTENTION),
        **overrides,
    )


def tiny_train_config(system: SystemConfig, batch_size: int = 6, **training) -> TrainConfig:
    return TrainConfig(
        system=system,
        augmentation=AugmentConfig(batch_size=batch_size, crop_bins=2, seed=0),
        **training,
    )


@pytest.fixture
def small_frontend() -> FrontendConfig:
    """Short durations and small grids for fast DSP tests"""
    return FrontendConfig(
        event_duration_s=1.0,
        recording_duration_s=1.5,
        n_bins=16,
        event_frames=16,
        recording_frames=24,
    )


@pytest.fixture
def dataset_dir(tmp_path: Path) -> Path:
    """
    Three recordings (N, CAS, DAS) with five events in the canonical layout;
    rec_c uses the challenge layout.
    """
    root = tmp_path / "dataset"
    write_wav(root / "rec_a.wav", tone(250.0, seconds=3.0))
    write_wav(root / "rec_b.wav", chirp(200.0, 1500.0, seconds=3.0))
    write_wav(root / "rec_c.wav", noise_bursts(seconds=2.0))
    (root / "rec_a.json").write_text(
        json.dumps(
            {
                "recording_id": "rec_a",
                "quality": "N",
                "time_unit": "s",
                "split": "train",
                "events": [
                    {"onset": 0.0, "offset": 1.0, "type": "N"},
                    {"onset": 1.5, "offset": 2.5, "type": "N"},
                ],
            }
        )
    )
    (root / "rec_b.json").write_text(
        json.dumps(
            {
                "recording_id": "rec_b",
                "quality": "CAS",
                "time_unit": "ms",
                "split": "train",
                "events": [
                    {"onset": 200, "offset": 1200, "type": "W"},
                    {"onset": 1500, "offset": 2900, "type": "Rho"},
                ],
            }
        )
    )
    (root / "rec_c.json").write_text(
        json.dumps(
            {
                "record_annotation": "DAS",
                "event_annotation": [{"start": "100", "end": "900", "type": "Fine Crackle"}],
                "split": "test",
            }
        )
    )
    return root
