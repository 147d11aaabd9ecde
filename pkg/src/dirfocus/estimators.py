"""scikit-learn style front end: EEG preprocessing and the direction classifier."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset.splits import Fold
from .dataset.trials import EEG_RATE, Sample
from .evaluation import balanced_accuracy
from .models.architectures import LsmConfig, ModelSpec, build_model
from .models.training import FoldData, train_fold
from .nn.optim import TrainConfig
from .signal_core import bandpass_filter, resample
from .validation import check_eeg, check_labels, check_spectra

__all__ = ["EegPreprocessor", "DirectionalFocusClassifier"]


class EegPreprocessor(TransformerMixin, BaseEstimator):
    """Band-pass at the recording rate, then resample to the decoder rate.

    Parameters
    ----------
    sample_rate : float
        Rate of the incoming EEG.
    lo, hi : float
        Pass band in Hz.
    target_rate : float
    """

    def __init__(self, sample_rate=EEG_RATE, lo=1.0, hi=32.0, target_rate=EEG_RATE, order=4):
        self.sample_rate = sample_rate
        self.lo = lo
        self.hi = hi
        self.target_rate = target_rate
        self.order = order

    def fit(self, X, y=None):
        X = check_eeg(X)
        if not 0 < self.lo < self.hi < self.sample_rate / 2:
            raise ValueError(f"need 0 < lo < hi < {self.sample_rate / 2}, got {self.lo}, {self.hi}")
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_channels_")
        X = check_eeg(X, self.n_channels_)
        out = []
        for x in X:
            f = bandpass_filter(x, self.sample_rate, self.lo, self.hi, self.order)
            out.append(resample(f, self.sample_rate, self.target_rate))
        return np.stack(out)


class DirectionalFocusClassifier(ClassifierMixin, BaseEstimator):
    """Train one decoder on EEG windows (and spectra for the dual-modal kinds).

    ``X`` is (B, C, T). Dual-modal kinds also take ``spectrum`` in
    :meth:`fit`, :meth:`predict` and :meth:`predict_proba`: raw MVDR power,
    (B, N_theta) or one vector shared by all windows.

    Without ``eval_set`` a ``validation_fraction`` of the windows is held
    out for early stopping. Windows from the same trial then straddle the
    split, so pass ``eval_set`` whenever trial identities are known.

    ``score`` is balanced accuracy.
    """

    def __init__(self, kind="EegCnn", C1=5, C2=5, hidden=32, cnn_kernels=5, cnn_time=17,
                 conv3d_kernels=8, conv3d_size=(3, 3, 9), learning_rate=3e-3, lr_decay=0.98,
                 l2_lambda=1e-4, batch_size=16, max_epochs=40, early_stop_patience=10,
                 validation_fraction=0.2, random_state=0):
        self.kind = kind
        self.C1 = C1
        self.C2 = C2
        self.hidden = hidden
        self.cnn_kernels = cnn_kernels
        self.cnn_time = cnn_time
        self.conv3d_kernels = conv3d_kernels
        self.conv3d_size = conv3d_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.l2_lambda = l2_lambda
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _samples(self, X, S, y, offset=0):
        dummy = np.ones((len(X), 1)) if S is None else S
        return [Sample(X[i], dummy[i], int(y[i]), offset + i, 0) for i in range(len(X))]

    def fit(self, X, y, spectrum=None, eval_set=None):
        X = check_eeg(X)
        y = check_labels(y, len(X))
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        spec = ModelSpec(
            kind=self.kind, n_classes=self.classes_.size, window_samples=X.shape[2],
            n_channels=X.shape[1], n_theta=1,
            lsm=LsmConfig(self.C1, self.C2, X.shape[1]), cnn_kernels=self.cnn_kernels,
            cnn_time=self.cnn_time, conv3d_kernels=self.conv3d_kernels,
            conv3d_size=tuple(self.conv3d_size), hidden=self.hidden,
        )
        S = None
        if spec.kind.uses_spectrum:
            if spectrum is None:
                raise ValueError(f"{spec.kind.value} needs spectrum=")
            S = check_spectra(spectrum, len(X))
            spec.n_theta = S.shape[1]

        rng = np.random.default_rng(self.random_state)
        if eval_set is not None:
            Xv, yv = eval_set[0], eval_set[1]
            Sv = eval_set[2] if len(eval_set) > 2 else None
            Xv = check_eeg(Xv, X.shape[1])
            yv = np.searchsorted(self.classes_, check_labels(yv, len(Xv)))
            Sv = None if S is None else check_spectra(Sv, len(Xv), S.shape[1])
            train = self._samples(X, S, y_idx)
            val = self._samples(Xv, Sv, yv, offset=len(X))
        else:
            order = rng.permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            if n_val >= len(X):
                raise ValueError("validation_fraction leaves no training windows")
            all_samples = self._samples(X, S, y_idx)
            val = [all_samples[i] for i in order[:n_val]]
            train = [all_samples[i] for i in order[n_val:]]
        fold = Fold(frozenset(s.trial_id for s in train), frozenset(s.trial_id for s in val), frozenset())
        config = TrainConfig(
            learning_rate=self.learning_rate, lr_decay=self.lr_decay, l2_lambda=self.l2_lambda,
            batch_size=self.batch_size, max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience, rng_seed=int(rng.integers(2 ** 31)),
        )
        model = build_model(spec, int(rng.integers(2 ** 31)))
        result = train_fold(model, FoldData(fold, train + val), config)
        self.model_ = result.model
        self.history_ = result.history
        self.spec_ = spec
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X, spectrum=None):
        check_is_fitted(self, "model_")
        X = check_eeg(X, self.spec_.n_channels)
        S = None
        if self.spec_.kind.uses_spectrum:
            if spectrum is None:
                raise ValueError(f"{self.spec_.kind.value} needs spectrum=")
            S = check_spectra(spectrum, len(X), self.spec_.n_theta)
        return self.model_.predict_proba(X, S)

    def predict(self, X, spectrum=None):
        return self.classes_[self.predict_proba(X, spectrum).argmax(axis=1)]

    def score(self, X, y, spectrum=None, sample_weight=None):
        y = check_labels(y, len(X))
        pred = np.searchsorted(self.classes_, self.predict(X, spectrum))
        true = np.searchsorted(self.classes_, y)
        return balanced_accuracy(pred, true, self.classes_.size, strict=False).balanced_acc
