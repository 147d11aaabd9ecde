"""Directional focus decoding from EEG and a two-microphone spatial spectrum."""

from .signal_core import MultiChannelAudio, Spectrogram, bandpass_filter, resample, stft
from .spatial import ArrayGeometry, SpatialSpectrum, mvdr_spectrum, spectrum_from_audio, steering_vector

__version__ = "0.1.0"
