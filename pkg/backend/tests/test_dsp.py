"""
Tests for the front end: conditioning filters, time-frequency maps and the feature cache
"""

import json

import numpy as np
import pytest
from conftest import RATE, chirp, tone

from src.dsp.features import (
    FEATURE_INDEX,
    FEATURE_SUFFIX,
    extract_features,
    extract_to_cache,
    load_feature_triple,
    save_feature_triple,
    standardize,
)
from src.dsp.filters import bandpass, design_bandpass, pad_duplicate, resample
from src.dsp.gammatone import gammatone_center_frequencies, gammatone_spectrogram
from src.dsp.grid import frame_average, interpolation_matrix, rescale
from src.dsp.types import Spectrogram, SpectrogramKind, Waveform
from src.dsp.wavelets import WaveletMother, cwt_pseudo_frequencies, cwt_spectrogram
from src.ingest.labels import TaskId, TaskLabel, TaskLevel
from src.ingest.manifest import load_manifest
from src.training.feature_store import FeatureSet
from src.utils.errors import FeatureStoreError, LabelError, ShapeError

TONE_FREQS = [100.0, 250.0, 500.0, 1000.0, 1800.0]
KINDS = [SpectrogramKind.GA, SpectrogramKind.WA, SpectrogramKind.WM]


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def _peak_row(values: np.ndarray) -> int:
    """Row with the most energy, ignoring the frames touched by edge transients"""
    n = values.shape[1]
    return int(np.argmax(values[:, n // 4 : 3 * n // 4].mean(axis=1)))


def _linear_map(w: Waveform, kind: SpectrogramKind) -> Spectrogram:
    if kind is SpectrogramKind.GA:
        return gammatone_spectrogram(w, n_channels=128, log=False)
    mother = WaveletMother.AMOR if kind is SpectrogramKind.WA else WaveletMother.MORSE
    return cwt_spectrogram(w, mother, n_scales=128, log=False)


class TestConditioning:
    def test_bandpass_rejects_low_hum(self):
        hum = tone(30.0, seconds=4.0)
        out = bandpass(hum, 60.0, 1500.0)
        mid = slice(len(hum) // 4, 3 * len(hum) // 4)
        attenuation = 20 * np.log10(_rms(out.samples[mid]) / _rms(hum.samples[mid]))
        assert attenuation <= -20.0

    def test_bandpass_passes_the_band(self):
        w = tone(500.0, seconds=2.0)
        out = bandpass(w, 60.0, 1500.0)
        mid = slice(len(w) // 4, 3 * len(w) // 4)
        assert _rms(out.samples[mid]) == pytest.approx(_rms(w.samples[mid]), rel=0.05)

    def test_band_reaching_nyquist_becomes_highpass(self):
        sos = design_bandpass(60.0, RATE / 2.0, RATE)
        assert sos.shape[1] == 6
        with pytest.raises(ShapeError, match="Nyquist"):
            design_bandpass(60.0, RATE, RATE)
        with pytest.raises(ShapeError):
            design_bandpass(500.0, 100.0, RATE)

    def test_resample_keeps_duration(self):
        w = tone(300.0, seconds=1.0, rate=8000)
        out = resample(w, RATE)
        assert out.rate == RATE
        assert len(out) == RATE
        assert _rms(out.samples[100:-100]) == pytest.approx(0.5 / np.sqrt(2), rel=0.02)

    def test_duplicate_padding_tiles(self):
        w = Waveform(np.array([1.0, 2.0, 3.0]), 3.0)
        assert pad_duplicate(w, 7 / 3).samples.tolist() == [1, 2, 3, 1, 2, 3, 1]
        assert pad_duplicate(w, 2 / 3).samples.tolist() == [1, 2]


class TestTimeFrequency:
    @pytest.mark.parametrize("freq", TONE_FREQS)
    def test_gammatone_localizes_a_tone(self, freq):
        spec = gammatone_spectrogram(tone(freq, seconds=2.0), n_channels=128, log=False)
        expected = int(np.argmin(np.abs(gammatone_center_frequencies(128) - freq)))
        assert spec.kind is SpectrogramKind.GA
        assert abs(_peak_row(spec.values) - expected) <= 2

    @pytest.mark.parametrize("mother", list(WaveletMother))
    @pytest.mark.parametrize("freq", TONE_FREQS)
    def test_scalogram_localizes_a_tone(self, mother, freq):
        spec = cwt_spectrogram(tone(freq, seconds=2.0), mother, n_scales=128, log=False)
        expected = int(np.argmin(np.abs(cwt_pseudo_frequencies(mother, 128) - freq)))
        assert spec.kind is mother.kind
        assert abs(_peak_row(spec.values) - expected) <= 2

    @pytest.mark.parametrize("kind", KINDS)
    def test_chirp_ridge_rises(self, kind):
        spec = _linear_map(chirp(100.0, 1500.0, seconds=4.0), kind)
        # drop about 90 ms at each end, where the filters are still settling
        ridge = spec.values.argmax(axis=0)[8:-8]
        assert np.all(np.diff(ridge) >= 0)
        assert ridge[-1] - ridge[0] >= 80

    def test_frequency_axes_ascend(self):
        for axis in (gammatone_center_frequencies(128), cwt_pseudo_frequencies(WaveletMother.MORSE, 128)):
            assert np.all(np.diff(axis) > 0)
            assert axis[0] == pytest.approx(60.0) and axis[-1] == pytest.approx(2000.0)

    def test_frame_average(self):
        x = np.arange(10, dtype=float)
        assert frame_average(x, 4, 2).tolist() == [1.5, 3.5, 5.5, 7.5]
        assert frame_average(np.ones(3), 4, 2).tolist() == [0.75]


class TestRescale:
    def test_same_size_is_identity(self):
        grid = np.random.default_rng(0).normal(size=(5, 7))
        np.testing.assert_allclose(rescale(grid, 5, 7), grid)

    def test_halving_averages_blocks(self):
        grid = np.arange(16, dtype=float).reshape(4, 4)
        expected = grid.reshape(2, 2, 2, 2).mean(axis=(1, 3))
        np.testing.assert_allclose(rescale(grid, 2, 2), expected)

    def test_weights_are_a_partition_of_unity(self):
        m = interpolation_matrix(155, 128)
        np.testing.assert_allclose(m.sum(axis=1), 1.0)
        assert m.min() >= 0

    def test_degenerate_spectrogram_is_refused(self):
        with pytest.raises(ShapeError):
            rescale(Spectrogram(np.zeros((1, 5)), SpectrogramKind.GA), 4, 4)


class TestExtractFeatures:
    def test_fixed_shapes_at_both_levels(self, small_frontend):
        short = tone(400.0, seconds=0.3, rate=8000)
        event = extract_features(short, TaskLevel.EVENT, small_frontend, item_id="x")
        assert event.stack().shape == (3, 16, 16)
        assert event.item_id == "x"
        recording = extract_features(short, "recording", small_frontend)
        assert recording.stack().shape == (3, 16, 24)
        assert np.all(np.isfinite(recording.stack()))

    def test_stack_order_is_ga_wa_wm(self, small_frontend):
        triple = extract_features(tone(400.0, seconds=0.5), TaskLevel.EVENT, small_frontend)
        np.testing.assert_array_equal(triple.stack()[0], triple.ga.values)
        np.testing.assert_array_equal(triple.stack()[2], triple.wm.values)

    def test_standardize(self):
        z = standardize(np.random.default_rng(1).normal(3.0, 2.0, size=(8, 8)))
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std() == pytest.approx(1.0)
        assert np.all(standardize(np.full((4, 4), 7.0)) == 0)

    def test_triple_file_keeps_label_and_metadata(self, small_frontend, tmp_path):
        triple = extract_features(tone(400.0, seconds=0.5), TaskLevel.EVENT, small_frontend, "ev", {"split": "train"})
        labelled = type(triple)(triple.ga, triple.wa, triple.wm, TaskLabel(TaskId.T1_2, 3), "ev", triple.metadata)
        loaded = load_feature_triple(save_feature_triple(tmp_path / f"ev{FEATURE_SUFFIX}", labelled))
        assert loaded.item_id == "ev"
        assert loaded.label == TaskLabel(TaskId.T1_2, 3)
        assert loaded.metadata == {"split": "train"}
        np.testing.assert_allclose(loaded.stack(), labelled.stack(), rtol=1e-6, atol=1e-6)

    def test_corrupt_file_is_an_io_error(self, tmp_path):
        path = tmp_path / f"bad{FEATURE_SUFFIX}"
        path.write_bytes(b"not a container")
        with pytest.raises(FeatureStoreError):
            load_feature_triple(path)


class TestFeatureCache:
    def test_extract_and_load_event_features(self, dataset_dir, small_frontend, tmp_path):
        out = tmp_path / "features"
        index = extract_to_cache(load_manifest(dataset_dir), TaskLevel.EVENT, out, small_frontend, workers=2)
        expected_ids = ["rec_a_000", "rec_a_001", "rec_b_000", "rec_b_001", "rec_c_000"]
        assert [entry["item_id"] for entry in index] == expected_ids
        doc = json.loads((out / FEATURE_INDEX).read_text())
        assert doc["level"] == "event"
        assert doc["frontend"]["n_bins"] == 16

        pool = FeatureSet.load(out, TaskId.T1_1)
        assert pool.inputs.shape == (5, 3, 16, 16)
        assert pool.labels.tolist() == [0, 0, 1, 1, 1]
        assert pool.subset("test").item_ids == ["rec_c_000"]
        assert pool.class_counts().to_dict() == {"Normal": 2, "Adventitious": 3}

    def test_known_task_labels_are_stored(self, dataset_dir, small_frontend, tmp_path):
        out = tmp_path / "features"
        index = extract_to_cache(
            load_manifest(dataset_dir), TaskLevel.EVENT, out, small_frontend, task=TaskId.T1_1
        )
        assert [entry["label"]["class_index"] for entry in index] == [0, 0, 1, 1, 1]
        assert index[0]["label"] == {"task": "T1_1", "class_index": 0, "name": "Normal"}
        assert json.loads((out / FEATURE_INDEX).read_text())["task"] == "T1_1"

        first = load_feature_triple(out / index[0]["file"])
        assert first.label == TaskLabel(TaskId.T1_1, 0)
        assert first.metadata["raw_label"] == index[0]["raw_label"]
        assert load_feature_triple(out / index[-1]["file"]).label == TaskLabel(TaskId.T1_1, 1)

        assert FeatureSet.load(out, TaskId.T1_1).labels.tolist() == [0, 0, 1, 1, 1]
        # another event-level task still maps from the raw labels
        assert FeatureSet.load(out, TaskId.T1_2).labels.shape == (5,)

    def test_untasked_cache_has_no_labels(self, dataset_dir, small_frontend, tmp_path):
        index = extract_to_cache(load_manifest(dataset_dir), TaskLevel.EVENT, tmp_path, small_frontend)
        assert all("label" not in entry for entry in index)
        assert load_feature_triple(tmp_path / index[0]["file"]).label is None
        with pytest.raises(LabelError):
            extract_to_cache(load_manifest(dataset_dir), "event", tmp_path, small_frontend, task=TaskId.T2_1)

    def test_level_mismatch_is_refused(self, dataset_dir, small_frontend, tmp_path):
        out = tmp_path / "features"
        extract_to_cache(load_manifest(dataset_dir), TaskLevel.RECORDING, out, small_frontend)
        assert FeatureSet.load(out, TaskId.T2_2).input_shape == (16, 24)
        with pytest.raises(LabelError):
            FeatureSet.load(out, TaskId.T1_2)

    def test_missing_cache_names_the_directory(self, tmp_path):
        with pytest.raises(FeatureStoreError, match="extract"):
            FeatureSet.load(tmp_path / "none", TaskId.T1_1)
