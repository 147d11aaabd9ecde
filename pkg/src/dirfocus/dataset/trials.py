"""Trial data model, labeling paradigms and decision-window segmentation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..signal_core import MultiChannelAudio
from ..spatial import SpatialSpectrum

__all__ = [
    "DIRECTIONS",
    "EEG_RATE",
    "EEG_CHANNELS",
    "EXCLUDED",
    "LabelParadigm",
    "EegTrial",
    "Sample",
    "label_trial",
    "class_names",
    "segment_trial",
    "stack_samples",
]

# competing-speaker directions in degrees; negative is the listener's left
DIRECTIONS = (-135, -120, -90, -60, -45, -30, -15, 15, 30, 45, 60, 90, 120, 135)
EEG_RATE = 128
EEG_CHANNELS = 32

# directions that have a front-rear counterpart in DIRECTIONS
_FRONT_REAR = (-135, -120, -60, -45, 45, 60, 120, 135)


class _Excluded:
    __slots__ = ()

    def __repr__(self):
        return "EXCLUDED"

    def __bool__(self):
        return False


EXCLUDED = _Excluded()


class LabelParadigm(enum.Enum):
    FULL14 = "Full14"
    OCTAL8 = "Octal8"
    QUATERNARY4 = "Quaternary4"
    BINARY2 = "Binary2"

    @property
    def n_classes(self) -> int:
        return {"Full14": 14, "Octal8": 8, "Quaternary4": 4, "Binary2": 2}[self.value]

    @classmethod
    def parse(cls, value) -> "LabelParadigm":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValueError(f"unknown label paradigm {value!r}")


_QUADRANTS = ("left-front", "left-rear", "right-front", "right-rear")


def label_trial(direction, paradigm: LabelParadigm):
    """Class index of an attended direction, or :data:`EXCLUDED`.

    Full14 gives every direction its own class in ascending angle order.
    Octal8 and Quaternary4 keep only directions with a front-rear counterpart
    (±45/±135, ±60/±120); Quaternary4 maps those to quadrants in the order
    left-front, left-rear, right-front, right-rear. Binary2 is 0 = left,
    1 = right.
    """
    paradigm = LabelParadigm.parse(paradigm)
    direction = int(direction) if float(direction).is_integer() else direction
    if direction not in DIRECTIONS:
        raise ValueError(f"direction {direction} is not one of {DIRECTIONS}")
    if paradigm is LabelParadigm.FULL14:
        return DIRECTIONS.index(direction)
    if paradigm is LabelParadigm.BINARY2:
        return int(direction > 0)
    if direction not in _FRONT_REAR:
        return EXCLUDED
    if paradigm is LabelParadigm.OCTAL8:
        return _FRONT_REAR.index(direction)
    right = direction > 0
    rear = abs(direction) > 90
    return 2 * int(right) + int(rear)


def class_names(paradigm: LabelParadigm) -> list[str]:
    paradigm = LabelParadigm.parse(paradigm)
    if paradigm is LabelParadigm.FULL14:
        return [f"{d:+d}" for d in DIRECTIONS]
    if paradigm is LabelParadigm.OCTAL8:
        return [f"{d:+d}" for d in _FRONT_REAR]
    if paradigm is LabelParadigm.QUATERNARY4:
        return list(_QUADRANTS)
    return ["left", "right"]


@dataclass
class EegTrial:
    """One listening trial.

    ``eeg`` is ``[C x T_total]`` at :data:`EEG_RATE`. The unattended speaker
    always sits at the mirror direction of the attended one.
    """

    subject_id: int
    trial_id: int
    trial_order: int
    attended_direction: int
    attended_audio_id: int
    eeg: np.ndarray
    spectrum: Optional[SpatialSpectrum] = None
    audio: Optional[MultiChannelAudio] = field(default=None, repr=False)

    def __post_init__(self):
        if self.attended_direction not in DIRECTIONS:
            raise ValueError(
                f"trial {self.trial_id}: attended direction {self.attended_direction} is not one of {DIRECTIONS}"
            )
        self.attended_direction = int(self.attended_direction)
        self.eeg = np.asarray(self.eeg, dtype=np.float64)
        if self.eeg.ndim != 2 or self.eeg.shape[0] != EEG_CHANNELS:
            raise ValueError(
                f"trial {self.trial_id}: EEG must be [{EEG_CHANNELS} x T], got shape {self.eeg.shape}"
            )

    @property
    def unattended_direction(self) -> int:
        return -self.attended_direction

    @property
    def n_samples(self) -> int:
        return self.eeg.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / EEG_RATE


@dataclass(frozen=True)
class Sample:
    """One decision window: EEG segment, the trial's spectrum, and the class."""

    eeg: np.ndarray
    spectrum: np.ndarray
    label: int
    trial_id: int
    subject_id: int


_NO_SPECTRUM = np.empty(0)


def segment_trial(trial: EegTrial, window_seconds: float, paradigm: LabelParadigm,
                  require_spectrum: bool = True) -> list[Sample]:
    """Cut a trial into consecutive non-overlapping decision windows.

    Every window shares the trial's spectrum array (the same object, not a
    copy). Trials whose direction the paradigm excludes yield no samples.
    With ``require_spectrum=False`` a trial without spectrum gets an empty
    one, which is enough for EEG-only models.
    """
    win = int(round(window_seconds * EEG_RATE))
    if win <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    if win > trial.n_samples:
        raise ValueError(
            f"trial {trial.trial_id}: {window_seconds} s window is longer than the {trial.duration:.2f} s trial"
        )
    label = label_trial(trial.attended_direction, paradigm)
    if label is EXCLUDED:
        return []
    if trial.spectrum is not None:
        power = trial.spectrum.power
    elif require_spectrum:
        raise ValueError(f"trial {trial.trial_id} has no spatial spectrum")
    else:
        power = _NO_SPECTRUM
    n = trial.n_samples // win
    return [
        Sample(trial.eeg[:, i * win:(i + 1) * win], power, label, trial.trial_id, trial.subject_id)
        for i in range(n)
    ]


def stack_samples(samples, normalize_spectrum: bool = True):
    """Stack samples into ``(eeg (B, C, T), spectra (B, N_theta), labels (B,))``.

    With ``normalize_spectrum`` each spectrum is scaled to unit maximum.
    """
    if not samples:
        raise ValueError("no samples to stack")
    eeg = np.stack([s.eeg for s in samples])
    spectra = np.stack([s.spectrum for s in samples]).astype(np.float64)
    if normalize_spectrum and spectra.shape[1]:
        spectra = spectra / spectra.max(axis=1, keepdims=True)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return eeg, spectra, labels
