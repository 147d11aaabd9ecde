"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_eeg", "check_spectra", "check_labels", "check_window"]


def check_eeg(X, n_channels: int | None = None) -> np.ndarray:
    """EEG windows as a finite float64 array of shape (B, C, T)."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        X = X[np.newaxis]
    if X.ndim != 3:
        raise ValueError(f"EEG must be (n_windows, n_channels, n_samples), got shape {X.shape}")
    if n_channels is not None and X.shape[1] != n_channels:
        raise ValueError(f"EEG has {X.shape[1]} channels, expected {n_channels}")
    return X


def check_spectra(S, n_windows: int, n_theta: int | None = None) -> np.ndarray:
    """Spatial spectra as a positive float64 array of shape (B, N_theta)."""
    S = check_array(S, dtype=np.float64, ensure_2d=False)
    if S.ndim == 1:
        S = np.broadcast_to(S, (n_windows, S.size)).copy()
    if S.shape[0] != n_windows:
        raise ValueError(f"{S.shape[0]} spectra for {n_windows} EEG windows")
    if n_theta is not None and S.shape[1] != n_theta:
        raise ValueError(f"spectra have {S.shape[1]} angles, expected {n_theta}")
    if np.any(S <= 0):
        raise ValueError("spatial spectra must be strictly positive MVDR power")
    return S


def check_labels(y, n_windows: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size != n_windows:
        raise ValueError(f"expected {n_windows} labels, got shape {y.shape}")
    return y


def check_window(window_seconds: float, rate: float, total_samples: int | None = None) -> int:
    n = int(round(window_seconds * rate))
    if n < 1:
        raise ValueError(f"window of {window_seconds} s is empty at {rate} Hz")
    if total_samples is not None and n > total_samples:
        raise ValueError(f"window of {n} samples exceeds the {total_samples}-sample signal")
    return n
