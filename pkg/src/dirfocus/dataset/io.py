"""Dataset directory format.

A dataset root holds ``manifest.json``::

    {"format": 1,
     "n_channels": 32, "sample_rate": 128,
     "subjects": [0, 1, ...],
     "trials": [{"subject_id": 0, "trial_id": 0, "trial_order": 0,
                 "attended_direction": 45, "attended_audio_id": 3,
                 "eeg_file": "eeg/t0000.f32", "n_samples": 1280,
                 "audio_file": "audio/t0000.wav",      (optional)
                 "spectrum_file": "spectra/t0000.f64"  (optional)}, ...]}

EEG files are little-endian float32, ``[C x T]`` row-major. Spectra use the
``.f64`` + ``.json`` pair written by :func:`dirfocus.spatial.save_spectrum`.
Audio is anything :func:`dirfocus.audio_io.read_audio` reads.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from ..audio_io import read_audio, write_audio
from ..spatial import DEFAULT_LOADING, ArrayGeometry, load_spectrum, save_spectrum, spectrum_from_audio
from .trials import DIRECTIONS, EEG_CHANNELS, EEG_RATE, EegTrial

__all__ = ["DatasetFormatError", "load_dataset", "save_dataset", "read_manifest"]

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
_REQUIRED = ("subject_id", "trial_id", "trial_order", "attended_direction", "attended_audio_id", "eeg_file")


class DatasetFormatError(ValueError):
    pass


def read_manifest(root) -> dict:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in dataset root {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("trials"), list):
        raise DatasetFormatError(f"{path}: expected an object with a 'trials' list")
    n_ch = manifest.get("n_channels", EEG_CHANNELS)
    if n_ch != EEG_CHANNELS:
        raise DatasetFormatError(f"{path}: n_channels={n_ch}, expected {EEG_CHANNELS}")
    rate = manifest.get("sample_rate", EEG_RATE)
    if rate != EEG_RATE:
        raise DatasetFormatError(f"{path}: EEG sample_rate={rate}, expected {EEG_RATE} (resample first)")
    return manifest


def _load_trial(root: Path, entry: dict, compute_missing: bool) -> EegTrial:
    tid = entry.get("trial_id", "?")
    missing = [k for k in _REQUIRED if k not in entry]
    if missing:
        raise DatasetFormatError(f"trial {tid}: manifest entry lacks {missing}")
    if entry["attended_direction"] not in DIRECTIONS:
        raise DatasetFormatError(
            f"trial {tid}: unknown attended direction {entry['attended_direction']} (allowed {DIRECTIONS})"
        )
    raw = np.fromfile(root / entry["eeg_file"], dtype="<f4")
    n = entry.get("n_samples", raw.size // EEG_CHANNELS)
    if raw.size != EEG_CHANNELS * n:
        raise DatasetFormatError(
            f"trial {tid}: {entry['eeg_file']} holds {raw.size} values, expected {EEG_CHANNELS} x {n}"
        )
    eeg = raw.reshape(EEG_CHANNELS, n).astype(np.float64)

    audio = spectrum = None
    if entry.get("audio_file"):
        audio = read_audio(root / entry["audio_file"])
        if audio.n_channels != 2:
            raise DatasetFormatError(f"trial {tid}: audio has {audio.n_channels} channels, expected 2")
    if entry.get("spectrum_file"):
        spectrum, header = load_spectrum(root / entry["spectrum_file"])
        if header.get("trial_id", entry["trial_id"]) != entry["trial_id"]:
            raise DatasetFormatError(
                f"trial {tid}: spectrum file belongs to trial {header['trial_id']}"
            )
    elif audio is not None and compute_missing:
        log.info("trial %s: computing spectrum from audio", tid)
        spectrum = spectrum_from_audio(audio)
    try:
        return EegTrial(
            subject_id=int(entry["subject_id"]),
            trial_id=int(entry["trial_id"]),
            trial_order=int(entry["trial_order"]),
            attended_direction=int(entry["attended_direction"]),
            attended_audio_id=int(entry["attended_audio_id"]),
            eeg=eeg,
            spectrum=spectrum,
            audio=audio,
        )
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


def load_dataset(root, compute_missing_spectra: bool = True) -> list[EegTrial]:
    """Read every trial listed in ``root/manifest.json``.

    Trials with audio but no spectrum file get their spectrum computed on
    the fly with the default scan settings.
    """
    root = Path(root)
    manifest = read_manifest(root)
    trials = [_load_trial(root, e, compute_missing_spectra) for e in manifest["trials"]]
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise DatasetFormatError(f"{root / MANIFEST}: duplicate trial ids")
    return trials


def save_dataset(root, trials, metadata: dict | None = None,
                 loading: float = DEFAULT_LOADING, geometry: ArrayGeometry = ArrayGeometry()) -> Path:
    """Write ``trials`` in the directory format; returns the manifest path."""
    root = Path(root)
    (root / "eeg").mkdir(parents=True, exist_ok=True)
    entries = []
    for t in trials:
        stem = f"t{t.trial_id:05d}"
        eeg_rel = f"eeg/{stem}.f32"
        t.eeg.astype("<f4").tofile(root / eeg_rel)
        entry = {
            "subject_id": t.subject_id,
            "trial_id": t.trial_id,
            "trial_order": t.trial_order,
            "attended_direction": t.attended_direction,
            "attended_audio_id": t.attended_audio_id,
            "eeg_file": eeg_rel,
            "n_samples": t.n_samples,
        }
        if t.audio is not None:
            entry["audio_file"] = str(write_audio(root / "audio" / f"{stem}.wav", t.audio).relative_to(root))
        if t.spectrum is not None:
            path = save_spectrum(root / "spectra" / stem, t.spectrum, t.trial_id, loading, geometry)
            entry["spectrum_file"] = str(path.relative_to(root))
        entries.append(entry)
    manifest = {
        "format": 1,
        "n_channels": EEG_CHANNELS,
        "sample_rate": EEG_RATE,
        "subjects": sorted({t.subject_id for t in trials}),
        "trials": entries,
    }
    if metadata:
        manifest["metadata"] = metadata
    path = root / MANIFEST
    path.write_text(json.dumps(manifest, indent=1))
    return path
