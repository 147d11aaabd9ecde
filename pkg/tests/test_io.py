import json

import numpy as np
import pytest
from scipy.io import wavfile

from dirfocus.audio_io import read_audio, write_audio
from dirfocus.dataset import DatasetFormatError, load_dataset, read_manifest, save_dataset
from dirfocus.dataset.synth import SynthConfig, synth_generate
from dirfocus.signal_core import MultiChannelAudio


@pytest.fixture(scope="module")
def tiny_trials():
    return synth_generate(SynthConfig(n_subjects=2, trials_per_subject=3, trial_seconds=1, keep_audio=True), 2)


class TestAudioIo:
    def test_wav_float_round_trip(self, tmp_path):
        x = np.random.default_rng(0).uniform(-0.5, 0.5, (2, 1000))
        write_audio(tmp_path / "a.wav", MultiChannelAudio(x, 8000))
        back = read_audio(tmp_path / "a.wav")
        assert back.sample_rate == 8000
        np.testing.assert_allclose(back.samples, x, atol=1e-7)

    def test_wav_pcm16(self, tmp_path):
        pcm = np.array([[0, 16384], [-32768, 0]], dtype=np.int16)
        wavfile.write(tmp_path / "p.wav", 16000, pcm)
        back = read_audio(tmp_path / "p.wav")
        np.testing.assert_allclose(back.samples, [[0, -1.0], [0.5, 0]])

    def test_raw_with_sidecar(self, tmp_path):
        x = np.arange(12, dtype=np.float64).reshape(2, 6)
        path = write_audio(tmp_path / "r.f32", MultiChannelAudio(x, 44100))
        assert json.loads(path.with_suffix(".json").read_text())["channels"] == 2
        np.testing.assert_array_equal(read_audio(path).samples, x)

    def test_raw_planar(self, tmp_path):
        np.arange(6, dtype="<f4").tofile(tmp_path / "r.raw")
        (tmp_path / "r.json").write_text(json.dumps({"channels": 2, "sample_rate": 8000, "layout": "planar"}))
        np.testing.assert_array_equal(read_audio(tmp_path / "r.raw").samples, [[0, 1, 2], [3, 4, 5]])

    def test_raw_needs_sidecar(self, tmp_path):
        np.zeros(4, dtype="<f4").tofile(tmp_path / "x.raw")
        with pytest.raises(FileNotFoundError):
            read_audio(tmp_path / "x.raw")


class TestDatasetIo:
    def test_round_trip(self, tmp_path, tiny_trials):
        save_dataset(tmp_path, tiny_trials, metadata={"note": "unit"})
        manifest = read_manifest(tmp_path)
        assert manifest["subjects"] == [0, 1] and manifest["metadata"] == {"note": "unit"}
        back = load_dataset(tmp_path)
        for a, b in zip(tiny_trials, back):
            assert (a.trial_id, a.subject_id, a.trial_order, a.attended_direction, a.attended_audio_id) == \
                   (b.trial_id, b.subject_id, b.trial_order, b.attended_direction, b.attended_audio_id)
            np.testing.assert_array_equal(b.eeg, a.eeg.astype(np.float32))
            assert np.array_equal(b.spectrum.power, a.spectrum.power)
        raw = np.fromfile(tmp_path / manifest["trials"][0]["eeg_file"], dtype="<f4")
        assert raw.size == 32 * 128

    def test_missing_spectrum_computed_from_audio(self, tmp_path, tiny_trials):
        save_dataset(tmp_path, tiny_trials)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        for e in manifest["trials"]:
            del e["spectrum_file"]
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        back = load_dataset(tmp_path)
        audio_spec = load_dataset(tmp_path, compute_missing_spectra=False)
        assert all(t.spectrum is not None for t in back)
        assert all(t.spectrum is None for t in audio_spec)
        # WAV is float32, so the recomputed spectrum differs only by rounding
        np.testing.assert_allclose(back[0].spectrum.power, tiny_trials[0].spectrum.power, rtol=1e-4)

    def _corrupt(self, tmp_path, tiny_trials, **changes):
        save_dataset(tmp_path, tiny_trials)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["trials"][1].update(changes)
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))

    def test_unknown_direction_names_trial(self, tmp_path, tiny_trials):
        self._corrupt(tmp_path, tiny_trials, attended_direction=0)
        with pytest.raises(DatasetFormatError, match=f"trial {tiny_trials[1].trial_id}"):
            load_dataset(tmp_path)

    def test_shape_mismatch_names_trial(self, tmp_path, tiny_trials):
        self._corrupt(tmp_path, tiny_trials, n_samples=999)
        with pytest.raises(DatasetFormatError, match=f"trial {tiny_trials[1].trial_id}"):
            load_dataset(tmp_path)

    def test_missing_field(self, tmp_path, tiny_trials):
        save_dataset(tmp_path, tiny_trials)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        del manifest["trials"][0]["trial_order"]
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DatasetFormatError, match="trial_order"):
            load_dataset(tmp_path)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(DatasetFormatError):
            load_dataset(tmp_path)

    def test_missing_root(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "absent")

    def test_duplicate_ids(self, tmp_path, tiny_trials):
        self._corrupt(tmp_path, tiny_trials, trial_id=tiny_trials[0].trial_id,
                      spectrum_file=None)
        with pytest.raises(DatasetFormatError, match="duplicate"):
            load_dataset(tmp_path, compute_missing_spectra=False)
