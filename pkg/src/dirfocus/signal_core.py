"""Time-domain preprocessing shared by the EEG and audio paths."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

__all__ = [
    "MultiChannelAudio",
    "Spectrogram",
    "bandpass_filter",
    "resample",
    "stft",
]


@dataclass(frozen=True)
class MultiChannelAudio:
    """Real-valued audio, one row per microphone."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError(f"audio must be [channels x samples], got shape {samples.shape}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """STFT coefficients ``bins[l, f, n]`` for channel ``l``, bin ``f``, frame ``n``.

    Coefficients use orthonormal DFT scaling, so for every frame the one-sided
    energy ``sum(w_f * |bins|**2)`` (``w_f`` = 1 at DC/Nyquist, 2 elsewhere)
    equals the energy of the windowed frame.
    """

    bins: np.ndarray
    freq_resolution: float
    hop: int
    window_len: int
    sample_rate: float

    def __post_init__(self):
        if self.bins.ndim != 3:
            raise ValueError(f"bins must be [L x F x N], got shape {self.bins.shape}")
        if self.bins.shape[1] != self.window_len // 2 + 1:
            raise ValueError("frequency axis must hold window_len // 2 + 1 bins")

    @property
    def n_channels(self) -> int:
        return self.bins.shape[0]

    @property
    def n_freqs(self) -> int:
        return self.bins.shape[1]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[2]

    @property
    def frequencies(self) -> np.ndarray:
        """Centre frequency of every bin in Hz."""
        return np.arange(self.n_freqs) * self.freq_resolution

    def onesided_weights(self) -> np.ndarray:
        w = np.full(self.n_freqs, 2.0)
        w[0] = 1.0
        if self.window_len % 2 == 0:
            w[-1] = 1.0
        return w


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError(f"expected a [channels x time] matrix, got shape {x.shape}")
    return x


def bandpass_filter(signal, sample_rate: float, lo: float, hi: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis.

    The filter runs forward and backward (``sosfiltfilt``), so the effective
    magnitude response is the square of an order-``order`` design and the
    phase is zero.

    Parameters
    ----------
    signal : array_like, shape (C, T) or (T,)
    sample_rate : float
        Sampling rate in Hz.
    lo, hi : float
        Band edges in Hz, ``0 < lo < hi < sample_rate / 2``.
    order : int
        Butterworth order per pass.

    Returns
    -------
    ndarray
        Filtered signal with the input's shape.
    """
    if not sample_rate > 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    if not 0 < lo < hi < sample_rate / 2:
        raise ValueError(
            f"band edges must satisfy 0 < lo < hi < fs/2; got lo={lo}, hi={hi}, fs={sample_rate}"
        )
    x = np.asarray(signal, dtype=np.float64)
    sos = sps.butter(order, [lo, hi], btype="bandpass", output="sos", fs=sample_rate)
    # sosfiltfilt needs more samples than its default pad length
    padlen = min(3 * (2 * len(sos) + 1), x.shape[-1] - 1)
    return sps.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


def resample(signal, from_rate: float, to_rate: float) -> np.ndarray:
    """Polyphase resampling with a Kaiser-windowed sinc anti-alias filter.

    The output length is ``round(T * to_rate / from_rate)``.
    """
    if not (from_rate > 0 and to_rate > 0):
        raise ValueError(f"rates must be positive, got {from_rate} -> {to_rate}")
    x = np.asarray(signal, dtype=np.float64)
    if from_rate == to_rate:
        return x.copy()
    ratio = Fraction(to_rate / from_rate).limit_denominator(10_000)
    y = sps.resample_poly(x, ratio.numerator, ratio.denominator, axis=-1, window=("kaiser", 5.0))
    n_out = int(round(x.shape[-1] * to_rate / from_rate))
    if y.shape[-1] >= n_out:
        return y[..., :n_out]
    pad = [(0, 0)] * (y.ndim - 1) + [(0, n_out - y.shape[-1])]
    return np.pad(y, pad)


def stft(audio: MultiChannelAudio, window_len: int = 512, hop: int = 256) -> Spectrogram:
    """Hann-windowed short-time Fourier transform of every channel.

    Frames start at multiples of ``hop`` and are not padded; the last partial
    frame is dropped, giving ``1 + (N_s - window_len) // hop`` frames.
    """
    if not isinstance(audio, MultiChannelAudio):
        raise TypeError("stft expects a MultiChannelAudio")
    if not 0 < hop <= window_len:
        raise ValueError(f"need 0 < hop <= window_len, got hop={hop}, window_len={window_len}")
    if audio.n_samples < window_len:
        raise ValueError(
            f"audio has {audio.n_samples} samples, shorter than one {window_len}-sample window"
        )
    window = sps.get_window("hann", window_len)
    frames = np.lib.stride_tricks.sliding_window_view(audio.samples, window_len, axis=-1)[:, ::hop]
    bins = np.fft.rfft(frames * window, axis=-1, norm="ortho")
    return Spectrogram(
        bins=np.ascontiguousarray(bins.transpose(0, 2, 1)),
        freq_resolution=audio.sample_rate / window_len,
        hop=hop,
        window_len=window_len,
        sample_rate=audio.sample_rate,
    )
