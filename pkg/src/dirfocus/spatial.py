"""MVDR spatial spectrum of a two-microphone recording.

Microphone 1 sits at the left ear and is the phase reference; microphone 2
sits at the right ear. Scan angles run from -90 degrees (left) to +90 degrees
(right).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .signal_core import MultiChannelAudio, Spectrogram, resample, stft

__all__ = [
    "ArrayGeometry",
    "SpatialSpectrum",
    "SingularCorrelationError",
    "DEFAULT_GRID",
    "steering_vector",
    "steering_vectors",
    "correlation_matrix",
    "correlation_matrices",
    "invert_hermitian_2x2",
    "mvdr_spectrum",
    "spectrum_from_audio",
    "save_spectrum",
    "load_spectrum",
    "SpatialSpectrumTransformer",
]

DEFAULT_GRID = np.arange(-90.0, 91.0, 1.0)
DEFAULT_LOADING = 1e-3


class SingularCorrelationError(np.linalg.LinAlgError):
    """Raised when an unloaded correlation matrix cannot be inverted."""

    def __init__(self, bin_index: int, frequency: float):
        self.bin_index = bin_index
        self.frequency = frequency
        super().__init__(
            f"correlation matrix at bin {bin_index} ({frequency:.1f} Hz) is singular; "
            "use a nonzero diagonal loading"
        )


@dataclass(frozen=True)
class ArrayGeometry:
    """Two-element array: microphone spacing ``d`` (m), speed of sound ``c`` (m/s)."""

    d: float = 0.18
    c: float = 343.0

    def __post_init__(self):
        if not (self.d > 0 and self.c > 0):
            raise ValueError(f"geometry needs d > 0 and c > 0, got d={self.d}, c={self.c}")

    @property
    def aliasing_frequency(self) -> float:
        """Highest frequency whose inter-microphone phase stays unambiguous."""
        return self.c / (2.0 * self.d)


@dataclass(frozen=True)
class SpatialSpectrum:
    power: np.ndarray
    grid: np.ndarray = field(default_factory=lambda: DEFAULT_GRID.copy())

    def __post_init__(self):
        power = np.asarray(self.power, dtype=np.float64)
        grid = np.asarray(self.grid, dtype=np.float64)
        if power.shape != grid.shape or power.ndim != 1:
            raise ValueError(f"power {power.shape} and grid {grid.shape} must be equal-length vectors")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] < -90 or grid[-1] > 90:
            raise ValueError("grid must lie inside [-90, 90] degrees")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "grid", grid)

    @property
    def peak(self) -> float:
        return float(self.grid[np.argmax(self.power)])

    def normalized(self) -> np.ndarray:
        """Power scaled to unit maximum."""
        return self.power / self.power.max()

    def local_maxima(self) -> np.ndarray:
        """Grid angles of local maxima, endpoints included, sorted by power."""
        p = self.power
        left = np.r_[-np.inf, p[:-1]]
        right = np.r_[p[1:], -np.inf]
        idx = np.flatnonzero((p >= left) & (p >= right) & ((p > left) | (p > right)))
        return self.grid[idx[np.argsort(p[idx])[::-1]]]


def _check_angles(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < -90) or np.any(theta > 90):
        raise ValueError(f"scan angles must lie in [-90, 90] degrees, got {theta}")
    return theta


def steering_vector(f: float, theta: float, geom: ArrayGeometry = ArrayGeometry()) -> np.ndarray:
    """``[1, exp(-2j*pi*f*sin(theta)*d/c)]`` for a plane wave from ``theta`` degrees."""
    theta = _check_angles(theta)
    phase = -2.0 * np.pi * f * np.sin(np.deg2rad(theta)) * geom.d / geom.c
    return np.array([1.0 + 0j, np.exp(1j * phase)])


def steering_vectors(freqs, grid, geom: ArrayGeometry = ArrayGeometry()) -> np.ndarray:
    """Steering vectors for every (frequency, angle) pair, shape ``(F, N_theta, 2)``."""
    grid = _check_angles(grid)
    freqs = np.asarray(freqs, dtype=np.float64)
    phase = -2.0 * np.pi * np.outer(freqs, np.sin(np.deg2rad(grid))) * geom.d / geom.c
    g = np.empty(phase.shape + (2,), dtype=np.complex128)
    g[..., 0] = 1.0
    g[..., 1] = np.exp(1j * phase)
    return g


def _require_two_channels(spec: Spectrogram):
    if spec.n_channels != 2:
        raise ValueError(f"the two-element steering model needs L = 2 channels, got {spec.n_channels}")


def correlation_matrices(spec: Spectrogram) -> np.ndarray:
    """``R[f, i, j] = sum_n Y_i(f, n) conj(Y_j(f, n))`` for every bin, shape ``(F, 2, 2)``."""
    _require_two_channels(spec)
    y = spec.bins
    return np.einsum("ifn,jfn->fij", y, y.conj())


def correlation_matrix(spec: Spectrogram, f: int) -> np.ndarray:
    _require_two_channels(spec)
    if not 0 <= f < spec.n_freqs:
        raise IndexError(f"bin {f} outside [0, {spec.n_freqs})")
    y = spec.bins[:, f, :]
    return y @ y.conj().T


def invert_hermitian_2x2(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form inverse of a stack of 2x2 Hermitian matrices.

    Returns ``(inverse, det)``; ``det`` is real. Entries with ``det == 0`` come
    back as ``inf`` and are for the caller to reject.
    """
    a = R[..., 0, 0].real
    d = R[..., 1, 1].real
    b = R[..., 0, 1]
    det = a * d - (b * b.conj()).real
    adj = np.empty_like(R)
    adj[..., 0, 0] = d
    adj[..., 1, 1] = a
    adj[..., 0, 1] = -b
    adj[..., 1, 0] = -b.conj()
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = adj / det[..., None, None]
    return inv, det


def _frequency_mask(spec: Spectrogram, geom: ArrayGeometry, max_freq) -> np.ndarray:
    freqs = spec.frequencies
    mask = np.ones(spec.n_freqs, dtype=bool)
    mask[0] = False
    if spec.window_len % 2 == 0:
        mask[-1] = False
    if max_freq == "aliasing":
        max_freq = geom.aliasing_frequency
    if max_freq is not None:
        mask &= freqs <= max_freq
    return mask


def mvdr_spectrum(
    spec: Spectrogram,
    geom: ArrayGeometry = ArrayGeometry(),
    grid=DEFAULT_GRID,
    loading: float = DEFAULT_LOADING,
    max_freq="aliasing",
) -> SpatialSpectrum:
    """Frequency-averaged MVDR scan power.

    For each scan angle the power is the mean over the retained bins of
    ``1 / Re(g^T (R + delta I)^-1 conj(g))`` with ``delta = loading * tr(R) / 2``.
    DC and Nyquist are always dropped; by default so is everything above the
    spatial-aliasing frequency ``c / (2 d)``. Pass ``max_freq=None`` to keep
    those bins, or a number in Hz to set the cutoff explicitly.

    Bins with zero energy carry no direction information and are skipped.

    Raises
    ------
    SingularCorrelationError
        If ``loading == 0`` and some retained bin has a singular ``R(f)``.
    """
    _require_two_channels(spec)
    if loading < 0:
        raise ValueError(f"loading must be non-negative, got {loading}")
    grid = _check_angles(grid)

    mask = _frequency_mask(spec, geom, max_freq)
    R = correlation_matrices(spec)
    trace = np.einsum("fii->f", R).real
    mask &= trace > 0
    bins = np.flatnonzero(mask)
    if bins.size == 0:
        raise ValueError("no frequency bin with nonzero energy inside the scan band")

    R = R[bins]
    R = R + (loading * trace[bins] / 2.0)[:, None, None] * np.eye(2)
    R_inv, det = invert_hermitian_2x2(R)
    scale = trace[bins] ** 2
    singular = det <= 1e-13 * scale
    if np.any(singular):
        bad = bins[np.argmax(singular)]
        raise SingularCorrelationError(int(bad), float(spec.frequencies[bad]))

    g = steering_vectors(spec.frequencies[bins], grid, geom)
    quad = np.einsum("fti,fij,ftj->ft", g, R_inv, g.conj()).real
    power = np.mean(1.0 / quad, axis=0)
    return SpatialSpectrum(power=power, grid=grid.copy())


def spectrum_from_audio(
    audio: MultiChannelAudio,
    geom: ArrayGeometry = ArrayGeometry(),
    grid=DEFAULT_GRID,
    loading: float = DEFAULT_LOADING,
    sample_rate: float = 8000.0,
    window_len: int = 512,
    hop: int = 256,
    max_freq="aliasing",
) -> SpatialSpectrum:
    """Resample to ``sample_rate``, take the STFT, and scan."""
    if audio.sample_rate != sample_rate:
        audio = MultiChannelAudio(resample(audio.samples, audio.sample_rate, sample_rate), sample_rate)
    return mvdr_spectrum(stft(audio, window_len, hop), geom, grid, loading, max_freq)


def save_spectrum(path, spectrum: SpatialSpectrum, trial_id: int, loading: float, geometry: ArrayGeometry) -> Path:
    """Write ``<stem>.f64`` (little-endian float64 power) and ``<stem>.json`` (header)."""
    path = Path(path).with_suffix(".f64")
    path.parent.mkdir(parents=True, exist_ok=True)
    spectrum.power.astype("<f8").tofile(path)
    header = {
        "trial_id": int(trial_id),
        "grid_degrees": spectrum.grid.tolist(),
        "loading": float(loading),
        "geometry": asdict(geometry),
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    return path


def load_spectrum(path) -> tuple[SpatialSpectrum, dict]:
    path = Path(path).with_suffix(".f64")
    header = json.loads(path.with_suffix(".json").read_text())
    power = np.fromfile(path, dtype="<f8")
    grid = np.asarray(header["grid_degrees"], dtype=np.float64)
    if power.shape != grid.shape:
        raise ValueError(f"{path}: {power.size} values but header lists {grid.size} grid angles")
    return SpatialSpectrum(power, grid), header


class SpatialSpectrumTransformer(TransformerMixin, BaseEstimator):
    """Map two-channel recordings to MVDR spatial spectra.

    Stateless: ``fit`` only validates parameters. ``transform`` accepts an
    array of shape ``(n, 2, N_s)`` or a list of ``(2, N_s)`` arrays /
    :class:`MultiChannelAudio` objects and returns ``(n, N_theta)``.

    Parameters
    ----------
    d, c : float
        Microphone spacing (m) and speed of sound (m/s).
    sample_rate : float
        Rate of array inputs; ``MultiChannelAudio`` inputs carry their own.
    target_rate : float
        Audio is resampled to this rate before the STFT.
    window_len, hop : int
        STFT parameters in samples at ``target_rate``.
    loading : float
        Diagonal loading relative to ``tr(R) / 2``.
    grid_step : float
        Scan resolution in degrees over [-90, 90].
    max_freq : "aliasing", float or None
        Upper frequency limit of the bin average.
    normalize : bool
        Scale every spectrum to unit maximum.
    """

    def __init__(
        self,
        d=0.18,
        c=343.0,
        sample_rate=8000.0,
        target_rate=8000.0,
        window_len=512,
        hop=256,
        loading=DEFAULT_LOADING,
        grid_step=1.0,
        max_freq="aliasing",
        normalize=True,
    ):
        self.d = d
        self.c = c
        self.sample_rate = sample_rate
        self.target_rate = target_rate
        self.window_len = window_len
        self.hop = hop
        self.loading = loading
        self.grid_step = grid_step
        self.max_freq = max_freq
        self.normalize = normalize

    @property
    def grid_(self) -> np.ndarray:
        n = int(round(180.0 / self.grid_step)) + 1
        return np.linspace(-90.0, 90.0, n)

    def fit(self, X=None, y=None):
        self.geometry_ = ArrayGeometry(self.d, self.c)
        self.n_features_out_ = self.grid_.size
        return self

    def transform(self, X) -> np.ndarray:
        geom = getattr(self, "geometry_", None) or ArrayGeometry(self.d, self.c)
        out = []
        for item in X:
            audio = item if isinstance(item, MultiChannelAudio) else MultiChannelAudio(item, self.sample_rate)
            sp = spectrum_from_audio(
                audio, geom, self.grid_, self.loading, self.target_rate, self.window_len, self.hop, self.max_freq
            )
            out.append(sp.normalized() if self.normalize else sp.power)
        return np.vstack(out) if out else np.empty((0, self.grid_.size))

    def get_feature_names_out(self, input_features=None):
        return np.array([f"theta_{a:+.0f}" for a in self.grid_], dtype=object)
