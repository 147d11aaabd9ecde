"""Seeded synthetic listening experiment.

Each trial places two speech-like harmonic sources at a mirrored direction
pair, renders them on the two-microphone array, computes the MVDR spectrum
of the mixture, and draws 32-channel EEG made of pink noise plus an optional
planted pattern tied to the attended direction (or only to its side).

Everything is drawn from one :class:`numpy.random.Generator` seeded by the
caller, so identical seeds give bit-identical datasets.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..signal_core import MultiChannelAudio
from ..spatial import ArrayGeometry, spectrum_from_audio
from .trials import DIRECTIONS, EEG_CHANNELS, EEG_RATE, EegTrial

__all__ = [
    "SynthConfig",
    "synth_generate",
    "speech_like_source",
    "render_two_mic",
    "pink_noise",
    "good_f0_ratio",
]

AUDIO_RATE = 8000.0
# band the MVDR scan actually looks at; sources are matched in power there
_BAND = (60.0, 953.0)
_F0_RANGE = (95.0, 260.0)
# rear head shadow: broadband loss plus a first-order low-pass
_SHADOW_GAIN = 0.6
_SHADOW_HZ = 700.0


@dataclass
class SynthConfig:
    """Parameters of the synthetic experiment.

    Parameters
    ----------
    n_subjects, trials_per_subject : int
    trial_seconds : float
        EEG length per trial.
    snr : float
        Microphone SNR in dB, against the summed source power before any
        head shadow.
    planted_eeg_gain : float
        Amplitude of the planted pattern relative to the unit-variance
        background. Zero makes the EEG label-independent.
    eeg_pattern : {"direction", "side"}
        Whether the planted pattern is indexed by the full direction or
        only by its sign.
    subject_variability : float
        Std of per-subject perturbations of the pattern vectors.
    audio_seconds : float
        Length of the rendered mixture used for the spectrum.
    n_audio : int
        Size of the speech-stimulus pool; ``attended_audio_id`` indexes it.
    render_audio : bool
        When false, trials carry no audio and no spectrum (fast rosters for
        split experiments).
    keep_audio : bool
        Attach the rendered mixture to each trial.
    """

    n_subjects: int = 21
    trials_per_subject: int = 32
    trial_seconds: float = 10.0
    snr: float = 20.0
    planted_eeg_gain: float = 1.0
    eeg_pattern: str = "direction"
    subject_variability: float = 0.0
    audio_seconds: float = 2.0
    n_audio: int = 32
    render_audio: bool = True
    keep_audio: bool = False

    def __post_init__(self):
        for name in ("n_subjects", "trials_per_subject", "n_audio"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.trial_seconds <= 0 or self.audio_seconds <= 0:
            raise ValueError("trial_seconds and audio_seconds must be positive")
        if self.planted_eeg_gain < 0 or self.subject_variability < 0:
            raise ValueError("planted_eeg_gain and subject_variability must be non-negative")
        if self.eeg_pattern not in ("direction", "side"):
            raise ValueError(f"eeg_pattern must be 'direction' or 'side', got {self.eeg_pattern!r}")
        if self.n_audio < 2:
            raise ValueError("n_audio must be at least 2 (attended and unattended streams differ)")

    def to_dict(self) -> dict:
        return asdict(self)


def good_f0_ratio(f1: float, f2: float) -> bool:
    """True when two fundamentals keep their harmonics mostly apart.

    The ratio must be at least 1.12 and stay 0.06 away from every p/q with
    q <= 4, p <= 8, otherwise many harmonics of the two voices share bins and
    the two-microphone scan cannot tell the sources apart there.
    """
    r = max(f1, f2) / min(f1, f2)
    if r < 1.12:
        return False
    for q in range(1, 5):
        for p in range(q, 9):
            if abs(r - p / q) < 0.06:
                return False
    return True


def speech_like_source(rng: np.random.Generator, f0: float, n_samples: int,
                       sample_rate: float = AUDIO_RATE) -> np.ndarray:
    """Voiced, syllable-modulated harmonic signal with unit in-band power.

    Harmonics of a slowly wobbling ``f0`` up to 3.5 kHz with 1/sqrt(k)
    amplitudes, a 4 Hz syllabic envelope and a little aspiration noise.
    """
    t = np.arange(n_samples) / sample_rate
    f0t = f0 * (1 + 0.005 * np.sin(2 * np.pi * 0.5 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0t) / sample_rate
    n_harm = max(1, int(min(3500.0, 0.45 * sample_rate) / f0))
    offsets = rng.uniform(0, 2 * np.pi, n_harm)
    x = np.zeros(n_samples)
    for k in range(1, n_harm + 1):
        x += np.cos(k * phase + offsets[k - 1]) / np.sqrt(k)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    x = x * env + 0.01 * rng.standard_normal(n_samples)
    return x / np.sqrt(_band_power(x, sample_rate))


def _band_power(x: np.ndarray, sample_rate: float) -> float:
    X = np.fft.rfft(x)
    f = np.fft.rfftfreq(x.size, 1 / sample_rate)
    band = (f > _BAND[0]) & (f < _BAND[1])
    return float(np.sum(np.abs(X[band]) ** 2)) / x.size


def render_two_mic(sources, directions, sample_rate: float = AUDIO_RATE, snr_db=None,
                   rng: np.random.Generator | None = None,
                   geometry: ArrayGeometry = ArrayGeometry(),
                   head_shadow: bool = True) -> MultiChannelAudio:
    """Mix far-field sources onto the two-microphone array.

    Each source reaches microphone 2 ahead of microphone 1 by
    ``d sin(theta) / c`` (a fractional delay applied in the frequency
    domain), matching the steering-vector phase convention of the scanner.
    Sources behind the listener (``|theta| > 90``) lose about 4 dB and pass
    through a first-order low-pass, identically on both channels. White sensor noise is added at
    ``snr_db`` relative to the summed source power before shadowing.
    """
    sources = [np.asarray(s, dtype=np.float64) for s in sources]
    if len(sources) != len(directions) or not sources:
        raise ValueError("need one direction per source")
    n = sources[0].size
    if any(s.size != n for s in sources):
        raise ValueError("sources must have equal length")
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    shadow = _SHADOW_GAIN / (1.0 + 1j * f / _SHADOW_HZ) if head_shadow else None
    left = np.zeros(f.size, dtype=np.complex128)
    right = np.zeros(f.size, dtype=np.complex128)
    dry_power = 0.0
    for s, theta in zip(sources, directions):
        S = np.fft.rfft(s)
        dry_power += np.mean(s ** 2)
        if head_shadow and abs(theta) > 90:
            S = S * shadow
        tau = geometry.d * np.sin(np.deg2rad(theta)) / geometry.c
        left += S
        right += S * np.exp(2j * np.pi * f * tau)
    x = np.vstack([np.fft.irfft(left, n), np.fft.irfft(right, n)])
    if snr_db is not None:
        if rng is None:
            raise ValueError("adding sensor noise needs an rng")
        sigma = np.sqrt(dry_power / 10 ** (snr_db / 10))
        x = x + sigma * rng.standard_normal(x.shape)
    return MultiChannelAudio(x, sample_rate)


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int) -> np.ndarray:
    """1/f noise, unit variance per channel."""
    white = rng.standard_normal((n_channels, n_samples))
    W = np.fft.rfft(white, axis=1)
    f = np.arange(W.shape[1], dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(W / np.sqrt(f), n_samples, axis=1)
    x -= x.mean(axis=1, keepdims=True)
    return x / x.std(axis=1, keepdims=True)


def _stimulus_f0s(rng, n: int) -> np.ndarray:
    """Fundamentals for the stimulus pool, each with at least one compatible partner."""
    f0s = rng.uniform(*_F0_RANGE, n)
    for i in range(n):
        for _ in range(1000):
            if any(good_f0_ratio(f0s[i], f0s[j]) for j in range(n) if j != i):
                break
            f0s[i] = rng.uniform(*_F0_RANGE)
        else:
            raise RuntimeError("could not draw a compatible stimulus pool")
    return f0s


def _pick_partner(rng, f0s, attended: int) -> int:
    ok = [a for a in range(len(f0s)) if a != attended and good_f0_ratio(f0s[a], f0s[attended])]
    return int(ok[rng.integers(len(ok))])


def synth_generate(config: SynthConfig, rng_seed: int) -> list[EegTrial]:
    """Generate a reproducible synthetic dataset.

    Directions cycle through shuffled copies of all 14 so every subject with
    at least 14 trials hears every direction. Stimulus ids follow a
    per-subject permutation of the pool; the competing stream is another id
    whose fundamental is harmonically distinct from the attended one.
    """
    rng = np.random.default_rng(rng_seed)
    n_eeg = int(round(config.trial_seconds * EEG_RATE))
    n_audio_samples = int(round(config.audio_seconds * AUDIO_RATE))

    # stimulus pool: one fundamental per audio id
    f0s = _stimulus_f0s(rng, config.n_audio)
    n_keys = len(DIRECTIONS) if config.eeg_pattern == "direction" else 2
    patterns = rng.standard_normal((n_keys, EEG_CHANNELS))
    patterns /= np.linalg.norm(patterns, axis=1, keepdims=True) / np.sqrt(EEG_CHANNELS)

    trials = []
    trial_id = 0
    for subject in range(config.n_subjects):
        sub_rng = np.random.default_rng(rng.integers(2 ** 63))
        reps = -(-config.trials_per_subject // len(DIRECTIONS))
        directions = np.concatenate([sub_rng.permutation(DIRECTIONS) for _ in range(reps)])
        audio_order = np.concatenate(
            [sub_rng.permutation(config.n_audio) for _ in range(-(-config.trials_per_subject // config.n_audio))]
        )
        sub_patterns = patterns + config.subject_variability * sub_rng.standard_normal(patterns.shape)
        for order in range(config.trials_per_subject):
            direction = int(directions[order])
            attended = int(audio_order[order])
            eeg = pink_noise(sub_rng, EEG_CHANNELS, n_eeg)
            if config.planted_eeg_gain > 0:
                key = DIRECTIONS.index(direction) if n_keys == len(DIRECTIONS) else int(direction > 0)
                freq = sub_rng.uniform(4.0, 8.0)
                t = np.arange(n_eeg) / EEG_RATE
                carrier = np.sqrt(2) * np.sin(2 * np.pi * freq * t + sub_rng.uniform(0, 2 * np.pi))
                eeg = eeg + config.planted_eeg_gain * np.outer(sub_patterns[key], carrier)

            spectrum = audio = None
            if config.render_audio:
                unattended = _pick_partner(sub_rng, f0s, attended)
                s_att = speech_like_source(sub_rng, f0s[attended], n_audio_samples)
                s_un = speech_like_source(sub_rng, f0s[unattended], n_audio_samples)
                audio = render_two_mic([s_att, s_un], [direction, -direction], AUDIO_RATE,
                                       config.snr, sub_rng)
                spectrum = spectrum_from_audio(audio)
            trials.append(EegTrial(
                subject_id=subject,
                trial_id=trial_id,
                trial_order=order,
                attended_direction=direction,
                attended_audio_id=attended,
                eeg=eeg,
                spectrum=spectrum,
                audio=audio if config.keep_audio else None,
            ))
            trial_id += 1
    return trials
