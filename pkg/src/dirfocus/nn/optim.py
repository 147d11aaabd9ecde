"""Adam with L2 regularisation, learning-rate schedules and training configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["TrainConfig", "Adam", "ReduceOnPlateau", "EarlyStopping"]


@dataclass
class TrainConfig:
    """Optimisation settings for one fold.

    ``lr_decay`` multiplies the learning rate at every epoch boundary; on top
    of that the rate halves whenever the validation loss has not improved for
    ``plateau_patience`` epochs. Training stops after ``early_stop_patience``
    epochs without a better validation balanced accuracy.
    """

    learning_rate: float = 3e-3
    lr_decay: float = 0.98
    l2_lambda: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 40
    early_stop_patience: int = 10
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        for name in ("batch_size", "max_epochs", "early_stop_patience", "plateau_patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.plateau_factor <= 1:
            raise ValueError("plateau_factor must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class Adam:
    """Adam (beta1 0.9, beta2 0.999, eps 1e-8) with ``l2 * w`` added to each gradient."""

    def __init__(self, params, lr: float = 1e-3, l2: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.l2 = l2
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            if self.l2:
                g = g + self.l2 * p.data
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state(self) -> dict:
        return {"t": self.t, "lr": self.lr, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}


class ReduceOnPlateau:
    """Multiply the optimiser's rate by ``factor`` after ``patience`` epochs without a lower loss."""

    def __init__(self, optimizer: Adam, patience: int = 3, factor: float = 0.5):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.optimizer.lr *= self.factor
            self.bad_epochs = 0
            return True
        return False


class EarlyStopping:
    """Track the best score (higher is better) and signal a stop after ``patience`` stale epochs."""

    def __init__(self, patience: int = 10):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = -1
        self.stale = 0

    def step(self, score: float, epoch: int) -> tuple[bool, bool]:
        """Return ``(improved, stop)``."""
        if score > self.best:
            self.best, self.best_epoch, self.stale = score, epoch, 0
            return True, False
        self.stale += 1
        return False, self.stale >= self.patience
