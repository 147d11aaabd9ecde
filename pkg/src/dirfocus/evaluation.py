"""Balanced accuracy, chance baselines, Wilcoxon sign-rank and bootstrap significance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

__all__ = [
    "EvalResult",
    "StatTestResult",
    "WilcoxonResult",
    "balanced_accuracy",
    "chance_samples",
    "wilcoxon_signrank",
    "bootstrap_significance",
    "dual_null_test",
    "significance_stars",
    "binomial_band",
]


@dataclass
class EvalResult:
    confusion: np.ndarray
    per_class_acc: np.ndarray
    balanced_acc: float
    n_samples: np.ndarray

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class_acc": [None if np.isnan(a) else float(a) for a in self.per_class_acc],
            "balanced_acc": float(self.balanced_acc),
            "n_samples": self.n_samples.tolist(),
        }


def balanced_accuracy(predictions, labels, n_class: int, strict: bool = True) -> EvalResult:
    """Mean over classes of the fraction of that class's samples predicted correctly.

    Parameters
    ----------
    strict : bool
        If true, a class without samples is an error (its accuracy is
        undefined). If false, such classes are left out of the average and
        reported as NaN; training loops use this for small validation sets.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(f"predictions {predictions.shape} and labels {labels.shape} must be equal-length vectors")
    for name, v in (("predictions", predictions), ("labels", labels)):
        if v.size and (v.min() < 0 or v.max() >= n_class):
            raise ValueError(f"{name} contain indices outside [0, {n_class})")
    confusion = np.zeros((n_class, n_class), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    absent = np.flatnonzero(counts == 0)
    if absent.size and (strict or absent.size == n_class):
        raise ValueError(f"classes {absent.tolist()} have no samples; balanced accuracy is undefined")
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.diag(confusion) / counts
    return EvalResult(confusion, per_class, float(np.nanmean(per_class)), counts)


def binomial_band(n: int, p: float, level: float = 0.99) -> tuple[float, float]:
    """Central ``level`` interval of Binomial(n, p) / n."""
    lo, hi = stats.binom.interval(level, n, p)
    return lo / n, hi / n


def chance_samples(n, p: float, rng_seed=None, size=None):
    """Accuracy of a random decoder on ``n`` test samples: Binomial(n, p) / n.

    ``n`` may be a vector of test-set sizes (one draw each). ``rng_seed`` may
    be an int or a Generator.
    """
    if not 0 < p < 1:
        raise ValueError(f"chance level must lie in (0, 1), got {p}")
    n = np.asarray(n)
    if np.any(n < 1):
        raise ValueError("test-set size must be positive")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.binomial(n, p, size=size) / n


@dataclass
class WilcoxonResult:
    p_value: float
    statistic: float
    n_used: int
    method: str
    degenerate: bool = False


@lru_cache(maxsize=64)
def _null_counts(n: int) -> np.ndarray:
    # number of sign patterns reaching each doubled rank sum, untied ranks 1..n
    return _subset_sum_counts(tuple(range(2, 2 * n + 1, 2)))


def _subset_sum_counts(weights) -> np.ndarray:
    total = sum(weights)
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for w in weights:
        counts[w:] = counts[w:] + counts[:-w]
    return counts


def wilcoxon_signrank(x, y, exact_max: int = 25) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of the paired differences ``x - y``.

    Zero differences are dropped and tied magnitudes get mid-ranks. With at
    most ``exact_max`` non-zero differences the p value comes from the exact
    permutation distribution of the (possibly tied) ranks; above that, from
    the normal approximation with tie-corrected variance. If every difference
    is zero the result is ``p = 1`` with ``degenerate`` set and a warning.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be paired vectors of equal length")
    if x.size < 5:
        raise ValueError(f"need at least 5 pairs, got {x.size}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        warnings.warn("all paired differences are zero; returning p = 1", RuntimeWarning, stacklevel=2)
        return WilcoxonResult(1.0, 0.0, 0, "degenerate", True)
    ranks = stats.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2
    if n <= exact_max:
        doubled = np.rint(2 * ranks).astype(np.int64)
        if np.unique(doubled).size == n:
            counts = _null_counts(n)
        else:
            counts = _subset_sum_counts(tuple(sorted(int(v) for v in doubled)))
        probs = counts / counts.sum()
        k = int(round(2 * w_plus))
        k_mirror = int(round(2 * total)) - k
        lo, hi = min(k, k_mirror), max(k, k_mirror)
        p = probs[:lo + 1].sum() + probs[hi:].sum() if lo != hi else 1.0
        return WilcoxonResult(float(min(1.0, p)), w_plus, n, "exact")
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - np.sum(tie_counts ** 3 - tie_counts) / 48
    z = (w_plus - total / 2) / np.sqrt(var)
    p = 2 * stats.norm.sf(abs(z))
    return WilcoxonResult(float(min(1.0, p)), w_plus, n, "normal")


@dataclass
class StatTestResult:
    p_value: float
    p95_bootstrap: float
    n_bootstrap: int
    significant: bool
    alpha: float = 0.05
    details: dict = field(default_factory=dict)

    @property
    def stars(self) -> str:
        return significance_stars(self.p95_bootstrap) if self.significant else ""

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "p95_bootstrap": self.p95_bootstrap,
            "n_bootstrap": self.n_bootstrap,
            "significant": self.significant,
            "alpha": self.alpha,
            "stars": self.stars,
            "details": self.details,
        }


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def bootstrap_significance(per_fold_acc, baseline, n_boot: int = 10_000, rng_seed=0,
                           alpha: float = 0.05, alternative: str = "greater") -> StatTestResult:
    """Sign-rank test of fold accuracies against a baseline, bootstrapped.

    Parameters
    ----------
    per_fold_acc : sequence of float
        Decoder accuracy per fold.
    baseline : sequence of float or callable
        Paired baseline accuracies (for example chance draws with each fold's
        test size, or another model's per-fold accuracy). A callable is
        called as ``baseline(rng)`` to draw that vector.
    n_boot : int
        Replicates. Each one resamples the baseline vector with replacement
        and recomputes the two-sided sign-rank p against ``per_fold_acc``.
    alternative : {"greater", "two-sided"}
        With ``"greater"`` the decision also needs the mean accuracy to
        exceed the mean baseline; a significant deficit is not a success.

    Returns
    -------
    StatTestResult
        ``p_value`` is the test against the original baseline vector and
        ``p95_bootstrap`` the 95th percentile over replicates, which is the
        decision value.
    """
    acc = np.asarray(per_fold_acc, dtype=np.float64)
    if acc.size < 5:
        raise ValueError(f"need at least 5 folds, got {acc.size}")
    if n_boot < 1000:
        raise ValueError(f"n_boot must be at least 1000, got {n_boot}")
    rng = np.random.default_rng(rng_seed)
    base = np.asarray(baseline(rng) if callable(baseline) else baseline, dtype=np.float64)
    if base.shape != acc.shape:
        raise ValueError(f"baseline has shape {base.shape}, accuracies {acc.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p0 = wilcoxon_signrank(acc, base).p_value
        idx = rng.integers(0, acc.size, size=(n_boot, acc.size))
        ps = np.array([wilcoxon_signrank(acc, base[row]).p_value for row in idx])
    p95 = float(np.percentile(ps, 95))
    direction_ok = alternative == "two-sided" or acc.mean() > base.mean()
    return StatTestResult(
        p_value=float(p0),
        p95_bootstrap=p95,
        n_bootstrap=int(n_boot),
        significant=bool(p95 < alpha and direction_ok),
        alpha=alpha,
        details={"mean_acc": float(acc.mean()), "mean_baseline": float(base.mean()), "alternative": alternative},
    )


def dual_null_test(sp_model_acc, eeg_model_acc, binary_chance_acc, n_boot: int = 10_000,
                   rng_seed=0, alpha: float = 0.05) -> StatTestResult:
    """Reject only if the dual-modal model beats both the EEG-only model and a binary decoder.

    Both comparisons run through :func:`bootstrap_significance` with
    ``alternative="greater"``; the reported p is the larger of the two.
    """
    seeds = np.random.SeedSequence(rng_seed).spawn(2)
    vs_eeg = bootstrap_significance(sp_model_acc, eeg_model_acc, n_boot, seeds[0], alpha)
    vs_bin = bootstrap_significance(sp_model_acc, binary_chance_acc, n_boot, seeds[1], alpha)
    return StatTestResult(
        p_value=max(vs_eeg.p_value, vs_bin.p_value),
        p95_bootstrap=max(vs_eeg.p95_bootstrap, vs_bin.p95_bootstrap),
        n_bootstrap=int(n_boot),
        significant=vs_eeg.significant and vs_bin.significant,
        alpha=alpha,
        details={"vs_eeg_model": vs_eeg.to_dict(), "vs_binary_chance": vs_bin.to_dict()},
    )
