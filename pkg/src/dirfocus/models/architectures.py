"""EEG and dual-modal (EEG + spatial spectrum) direction decoders.

Four architectures share one tail (convolution, ReLU, time average, flatten,
two fully connected layers):

``EegCnn``
    2-D convolution with kernels spanning all EEG channels.
``SpEegCnn``
    As ``EegCnn``, with the spectrum mapped to one extra EEG time sample.
``EegLsmCnn``
    Learnable spatial mapping of the channels onto a ``C1 x C2`` grid, then
    a 3-D convolution over (grid row, grid column, time).
``SpEegLsmCnn``
    As ``EegLsmCnn``, with the spectrum appended as one extra grid slice
    after the mapping.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from ..nn import functional as F
from ..nn.layers import BatchNorm, Conv, Linear, Module, Parameter, kaiming_uniform
from ..nn.tensor import Tensor, as_tensor

__all__ = [
    "ModelKind",
    "LsmConfig",
    "ModelSpec",
    "LearnableSpatialMapping",
    "FusionBlock",
    "DirectionDecoder",
    "build_model",
]


class ModelKind(enum.Enum):
    EEG_CNN = "EegCnn"
    SP_EEG_CNN = "SpEegCnn"
    EEG_LSM_CNN = "EegLsmCnn"
    SP_EEG_LSM_CNN = "SpEegLsmCnn"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        for m in cls:
            if str(value).replace("-", "").lower() in (m.value.lower(), m.name.replace("_", "").lower()):
                return m
        raise ValueError(f"unknown model kind {value!r}; choose from {[m.value for m in cls]}")

    @property
    def uses_spectrum(self) -> bool:
        return self in (ModelKind.SP_EEG_CNN, ModelKind.SP_EEG_LSM_CNN)

    @property
    def uses_lsm(self) -> bool:
        return self in (ModelKind.EEG_LSM_CNN, ModelKind.SP_EEG_LSM_CNN)

    @property
    def eeg_twin(self) -> "ModelKind":
        """The EEG-only architecture this one extends."""
        return {ModelKind.SP_EEG_CNN: ModelKind.EEG_CNN,
                ModelKind.SP_EEG_LSM_CNN: ModelKind.EEG_LSM_CNN}.get(self, self)


@dataclass
class LsmConfig:
    C1: int = 5
    C2: int = 5
    input_channels: int = 32

    def __post_init__(self):
        if self.C1 < 1 or self.C2 < 1 or self.input_channels < 1:
            raise ValueError(f"LSM sizes must be positive, got {self}")

    @property
    def n_virtual(self) -> int:
        return self.C1 * self.C2


@dataclass
class ModelSpec:
    """Architecture hyper-parameters.

    Parameters
    ----------
    kind : ModelKind or str
    n_classes : int
    window_samples : int
        EEG samples per decision window.
    n_channels : int
        Physical EEG channels.
    n_theta : int
        Length of the spatial spectrum (Sp variants).
    lsm : LsmConfig
    cnn_kernels, cnn_time : int
        Kernel count and temporal width of the channel-spanning convolution.
    conv3d_kernels : int
    conv3d_size : tuple of int
        (grid rows, grid columns, time); the grid axes are zero-padded to
        keep their size.
    hidden : int
        Width of the hidden fully connected layer.
    """

    kind: ModelKind = ModelKind.EEG_CNN
    n_classes: int = 14
    window_samples: int = 128
    n_channels: int = 32
    n_theta: int = 181
    lsm: LsmConfig = field(default_factory=LsmConfig)
    cnn_kernels: int = 5
    cnn_time: int = 17
    conv3d_kernels: int = 8
    conv3d_size: tuple = (3, 3, 9)
    hidden: int = 32

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        if isinstance(self.lsm, dict):
            self.lsm = LsmConfig(**self.lsm)
        self.conv3d_size = tuple(int(v) for v in self.conv3d_size)
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.lsm.input_channels != self.n_channels:
            raise ValueError(
                f"LSM expects {self.lsm.input_channels} input channels, spec has {self.n_channels}"
            )
        t = self.window_samples + int(self.kind.uses_spectrum)
        k_t = self.conv3d_size[2] if self.kind.uses_lsm else self.cnn_time
        if t < k_t:
            raise ValueError(f"window of {self.window_samples} samples is shorter than the {k_t}-sample kernel")

    @property
    def fusion_dim(self) -> int:
        return self.lsm.n_virtual if self.kind.uses_lsm else self.n_channels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["conv3d_size"] = list(self.conv3d_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class LearnableSpatialMapping(Module):
    """Channel mixing onto a virtual ``C1 x C2`` grid.

    Virtual channel ``k`` is ``sum_c x[c, t] * G[k, c]``, batch-normalised per
    virtual channel, then placed at grid cell ``(k // C2, k % C2)``.
    """

    def __init__(self, config: LsmConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        C = config.input_channels
        self.kernels = Parameter(kaiming_uniform(rng, (config.n_virtual, C), C))
        self.bn = BatchNorm(config.n_virtual)

    def mix(self, x) -> Tensor:
        """Unnormalised virtual channels, (B, C1*C2, T)."""
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.config.input_channels:
            raise ValueError(
                f"LSM shape mismatch: input {x.shape}, kernels {self.kernels.shape}"
            )
        B, C, T = x.shape
        z = x.transpose(0, 2, 1).reshape(B * T, C) @ self.kernels.transpose(1, 0)
        return z.reshape(B, T, self.config.n_virtual).transpose(0, 2, 1)

    def forward(self, x) -> Tensor:
        z = self.bn(self.mix(x))
        B, _, T = z.shape
        return z.reshape(B, self.config.C1, self.config.C2, T)


class FusionBlock(Module):
    """Map the spectrum to one feature slice and append it along time.

    ``z`` is (B, *grid, T); the FC output is reshaped to (B, *grid, 1) and
    concatenated, giving (B, *grid, T + 1).
    """

    def __init__(self, n_theta: int, grid_shape: tuple, rng: np.random.Generator):
        super().__init__()
        self.grid_shape = tuple(grid_shape)
        self.fc = Linear(n_theta, int(np.prod(self.grid_shape)), rng)

    def forward(self, z, spectrum) -> Tensor:
        z = as_tensor(z)
        if tuple(z.shape[1:-1]) != self.grid_shape:
            raise ValueError(f"fusion shape mismatch: features {z.shape}, slice {self.grid_shape}")
        p = self.fc(spectrum)
        B = z.shape[0]
        return F.concat([z, p.reshape((B,) + self.grid_shape + (1,))], axis=-1)


class DirectionDecoder(Module):
    """One of the four architectures, selected by ``spec.kind``."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        kind = spec.kind
        t = spec.window_samples + int(kind.uses_spectrum)
        if kind.uses_lsm:
            self.lsm = LearnableSpatialMapping(spec.lsm, rng)
            grid = (spec.lsm.C1, spec.lsm.C2)
            if kind.uses_spectrum:
                self.fusion = FusionBlock(spec.n_theta, grid, rng)
            kr, kc, kt = spec.conv3d_size
            self.conv = Conv(1, spec.conv3d_kernels, (kr, kc, kt), rng, padding=(kr // 2, kc // 2, 0))
            n_feat = spec.conv3d_kernels * spec.lsm.C1 * spec.lsm.C2
        else:
            if kind.uses_spectrum:
                self.fusion = FusionBlock(spec.n_theta, (spec.n_channels,), rng)
            self.conv = Conv(1, spec.cnn_kernels, (spec.n_channels, spec.cnn_time), rng)
            n_feat = spec.cnn_kernels
        self.n_time_in = t
        # per-angle standardisation of the log spectrum, fitted on training data
        self.register_buffer("spectrum_mean", np.zeros(spec.n_theta))
        self.register_buffer("spectrum_scale", np.ones(spec.n_theta))
        self.fc1 = Linear(n_feat, spec.hidden, rng)
        self.fc2 = Linear(spec.hidden, spec.n_classes, rng)

    def fit_spectrum_scaling(self, power) -> None:
        """Set the per-angle mean and std of ``10 log10(power)`` from training spectra.

        Standardising across trials (not within each spectrum) keeps level
        differences between trials, which carry the front/rear cue that the
        two-microphone delay alone cannot provide.
        """
        db = self._db(power)
        self.spectrum_mean[...] = db.mean(axis=0)
        std = db.std(axis=0)
        self.spectrum_scale[...] = np.where(std > 1e-12, std, 1.0)

    @staticmethod
    def _db(power) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(np.asarray(power, dtype=np.float64), 1e-300))

    def prepare_spectrum(self, power) -> np.ndarray:
        """Raw MVDR power (B, n_theta) to the standardised model input."""
        return (self._db(power) - self.spectrum_mean) / self.spectrum_scale

    def features(self, eeg, spectrum=None) -> Tensor:
        """Input of the first convolution, with the leading singleton channel."""
        kind = self.spec.kind
        x = as_tensor(eeg)
        if x.ndim != 3 or x.shape[1:] != (self.spec.n_channels, self.spec.window_samples):
            raise ValueError(
                f"expected EEG (B, {self.spec.n_channels}, {self.spec.window_samples}), got {x.shape}"
            )
        if kind.uses_spectrum:
            if spectrum is None:
                raise ValueError(f"{kind.value} needs a spectrum input")
            spectrum = as_tensor(spectrum)
            if spectrum.shape != (x.shape[0], self.spec.n_theta):
                raise ValueError(f"expected spectrum ({x.shape[0]}, {self.spec.n_theta}), got {spectrum.shape}")
        z = self.lsm(x) if kind.uses_lsm else x
        if kind.uses_spectrum:
            z = self.fusion(z, spectrum)
        return z.reshape((z.shape[0], 1) + z.shape[1:])

    def forward(self, eeg, spectrum=None) -> Tensor:
        """Logits; ``spectrum`` is the already standardised spectrum input."""
        h = F.relu(self.conv(self.features(eeg, spectrum)))
        h = F.flatten(F.avg_pool_time(h))
        h = F.relu(self.fc1(h))
        return self.fc2(h)

    def predict_proba(self, eeg, power=None, batch_size: int = 256) -> np.ndarray:
        """Class probabilities in evaluation mode, (B, n_classes).

        ``power`` is the raw spatial spectrum; it goes through
        :meth:`prepare_spectrum` first. EEG-only models ignore it.
        """
        was_training = self.training
        self.eval()
        spectrum = self.prepare_spectrum(power) if self.spec.kind.uses_spectrum else None
        try:
            out = []
            for i in range(0, len(eeg), batch_size):
                sp = None if spectrum is None else spectrum[i:i + batch_size]
                out.append(F.softmax(self.forward(eeg[i:i + batch_size], sp).data))
            return np.concatenate(out)
        finally:
            self.train(was_training)


def build_model(spec: ModelSpec, rng_seed: int = 0) -> DirectionDecoder:
    """Instantiate ``spec`` with Kaiming-uniform weights drawn from ``rng_seed``."""
    if isinstance(spec, dict):
        spec = ModelSpec.from_dict(spec)
    return DirectionDecoder(spec, np.random.default_rng(rng_seed))
