"""Reading and writing multichannel audio.

Two formats are supported:

* WAV files, PCM 16-bit or 32-bit float.
* Raw little-endian float32 samples with a JSON sidecar of the same stem,
  ``{"channels": L, "sample_rate": fs, "layout": "interleaved" | "planar"}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .signal_core import MultiChannelAudio


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def read_audio(path) -> MultiChannelAudio:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        rate, data = wavfile.read(path)
        if data.dtype == np.int16:
            data = data.astype(np.float64) / 32768.0
        elif data.dtype == np.int32:
            data = data.astype(np.float64) / 2147483648.0
        elif data.dtype.kind == "f":
            data = data.astype(np.float64)
        else:
            raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
        data = data.T if data.ndim == 2 else data[np.newaxis, :]
        return MultiChannelAudio(data, float(rate))

    sidecar = _sidecar(path)
    if not sidecar.exists():
        raise FileNotFoundError(f"{path}: raw audio needs a JSON sidecar at {sidecar}")
    meta = json.loads(sidecar.read_text())
    try:
        channels = int(meta["channels"])
        rate = float(meta["sample_rate"])
    except KeyError as exc:
        raise ValueError(f"{sidecar}: missing field {exc}") from None
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    if raw.size % channels:
        raise ValueError(f"{path}: {raw.size} samples do not divide into {channels} channels")
    if meta.get("layout", "interleaved") == "interleaved":
        data = raw.reshape(-1, channels).T
    else:
        data = raw.reshape(channels, -1)
    return MultiChannelAudio(data, rate)


def write_audio(path, audio: MultiChannelAudio) -> Path:
    """Write ``audio`` as float32 WAV (``.wav``) or raw float32 + sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".wav":
        wavfile.write(path, int(round(audio.sample_rate)), audio.samples.T.astype(np.float32))
        return path
    audio.samples.T.astype("<f4").tofile(path)
    _sidecar(path).write_text(
        json.dumps(
            {"channels": audio.n_channels, "sample_rate": audio.sample_rate, "layout": "interleaved"}
        )
    )
    return path
