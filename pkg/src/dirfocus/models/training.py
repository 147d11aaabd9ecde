"""Fold training, prediction and the test-access audit."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..dataset.splits import Fold
from ..dataset.trials import Sample, stack_samples
from ..evaluation import balanced_accuracy
from ..nn import functional as F
from ..nn.checkpoint import load_state_dict, state_dict
from ..nn.optim import Adam, EarlyStopping, ReduceOnPlateau, TrainConfig
from .architectures import DirectionDecoder

__all__ = ["FoldData", "AccessAudit", "TestAccessError", "TrainResult", "train_fold", "predict", "evaluate_split"]

log = logging.getLogger(__name__)


class TestAccessError(RuntimeError):
    """Test samples were read more than once, or while training."""

    __test__ = False  # not a pytest class


class AccessAudit:
    """Counts reads of each partition of a fold's samples."""

    def __init__(self):
        self.reads = Counter()
        self.training = False

    def record(self, part: str) -> None:
        if part == "test":
            if self.training:
                raise TestAccessError("test samples requested during training")
            if self.reads["test"] >= 1:
                raise TestAccessError("test samples requested a second time")
        self.reads[part] += 1

    def assert_clean(self) -> None:
        if self.reads["test"] != 1:
            raise TestAccessError(f"test samples were read {self.reads['test']} times, expected exactly once")


class FoldData:
    """Samples of one fold, partitioned by trial id, with audited access.

    Samples whose trial is in none of the fold's sets (for example trials a
    paradigm removed from training) are dropped.
    """

    def __init__(self, fold: Fold, samples, audit: AccessAudit | None = None):
        self.fold = fold
        self.audit = audit if audit is not None else AccessAudit()
        self._parts = {"train": [], "validation": [], "test": []}
        for s in samples:
            if s.trial_id in fold.train:
                self._parts["train"].append(s)
            elif s.trial_id in fold.validation:
                self._parts["validation"].append(s)
            elif s.trial_id in fold.test:
                self._parts["test"].append(s)

    def size(self, part: str) -> int:
        return len(self._parts[part])

    def get(self, part: str) -> list[Sample]:
        if part not in self._parts:
            raise KeyError(part)
        self.audit.record(part)
        return self._parts[part]


@dataclass
class TrainResult:
    model: DirectionDecoder
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_bacc: float = float("nan")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _loss_and_preds(model, eeg, spectra, labels, batch_size=256):
    probs = model.predict_proba(eeg, spectra if model.spec.kind.uses_spectrum else None, batch_size)
    p_true = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
    return float(-np.log(p_true).mean()), probs.argmax(axis=1)


def train_fold(model: DirectionDecoder, data: FoldData, config: TrainConfig) -> TrainResult:
    """Fit ``model`` on the fold's training samples, selecting on validation.

    Mini-batch Adam on softmax cross-entropy with L2, per-epoch learning
    rate decay, a halving on validation-loss plateaus and early stopping on
    validation balanced accuracy. The best-validation weights are restored
    before returning. Test samples are never touched.
    """
    if data.size("train") == 0 or data.size("validation") == 0:
        raise ValueError(
            f"empty split: {data.size('train')} training and {data.size('validation')} validation samples"
        )
    data.audit.training = True
    try:
        x_tr, p_tr, y_tr = stack_samples(data.get("train"), normalize_spectrum=False)
        x_va, p_va, y_va = stack_samples(data.get("validation"), normalize_spectrum=False)
    finally:
        data.audit.training = False
    n_class = model.spec.n_classes
    use_sp = model.spec.kind.uses_spectrum
    rng = np.random.default_rng(config.rng_seed)
    if use_sp:
        model.fit_spectrum_scaling(p_tr)
        f_tr = model.prepare_spectrum(p_tr)

    opt = Adam(model.parameters(), lr=config.learning_rate, l2=config.l2_lambda)
    plateau = ReduceOnPlateau(opt, config.plateau_patience, config.plateau_factor)
    stopper = EarlyStopping(config.early_stop_patience)
    best_state = state_dict(model)
    history = []

    for epoch in range(config.max_epochs):
        model.train()
        losses, correct = [], 0
        for idx in _batches(len(y_tr), config.batch_size, rng):
            if idx.size < 2:
                continue  # batch statistics need two samples
            logits = model(x_tr[idx], f_tr[idx] if use_sp else None)
            loss, probs = F.softmax_cross_entropy_with_probs(logits, y_tr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data) * idx.size)
            correct += int((probs.argmax(axis=1) == y_tr[idx]).sum())
        train_loss = sum(losses) / len(y_tr)

        val_loss, val_pred = _loss_and_preds(model, x_va, p_va if use_sp else None, y_va)
        val_bacc = balanced_accuracy(val_pred, y_va, n_class, strict=False).balanced_acc
        improved, stop = stopper.step(val_bacc, epoch)
        if improved:
            best_state = state_dict(model)
        history.append({
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": train_loss,
            "train_acc": correct / len(y_tr),
            "val_loss": val_loss,
            "val_bacc": val_bacc,
        })
        log.debug("epoch %d train %.4f val %.4f bacc %.3f", epoch, train_loss, val_loss, val_bacc)
        opt.lr *= config.lr_decay
        plateau.step(val_loss)
        if stop:
            break

    load_state_dict(model, best_state)
    model.eval()
    return TrainResult(model, history, stopper.best_epoch, stopper.best)


def predict(model: DirectionDecoder, sample: Sample) -> np.ndarray:
    """Class probabilities for one sample (evaluation mode)."""
    eeg, spectra, _ = stack_samples([sample], normalize_spectrum=False)
    return model.predict_proba(eeg, spectra if model.spec.kind.uses_spectrum else None)[0]


def evaluate_split(model: DirectionDecoder, data: FoldData, part: str = "test", strict: bool = False):
    """Balanced accuracy of ``model`` on one partition; reading "test" is audited.

    Returns ``(EvalResult, predictions, labels)``.
    """
    samples = data.get(part)
    if not samples:
        raise ValueError(f"no {part} samples in this fold")
    eeg, spectra, labels = stack_samples(samples, normalize_spectrum=False)
    probs = model.predict_proba(eeg, spectra if model.spec.kind.uses_spectrum else None)
    pred = probs.argmax(axis=1)
    return balanced_accuracy(pred, labels, model.spec.n_classes, strict=strict), pred, labels
