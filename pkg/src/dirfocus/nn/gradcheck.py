"""Central finite-difference oracle for reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

__all__ = ["GradCheckResult", "gradcheck"]


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_points: int
    worst: tuple
    passed: bool
    n_rejected: int = 0


def _rel_error(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def gradcheck(loss_fn, tensors, n_points: int = 10, h: float = 1e-5, tol: float = 1e-5,
              rng: np.random.Generator | None = None, floor: float = 1e-8,
              reject_kinks: bool = False) -> GradCheckResult:
    """Compare analytic and central-difference gradients at random coordinates.

    Parameters
    ----------
    loss_fn : callable
        No-argument function rebuilding the graph and returning a scalar
        :class:`Tensor`. It must be deterministic (evaluation-mode batch
        norm, or training mode without side effects on what it reads).
    tensors : sequence of Tensor
        Tracked leaves to check; ``n_points`` coordinates are drawn from each.
    floor : float
        Lower bound of the relative-error denominator, so that gradients
        that are exactly zero on both sides count as agreement.
    reject_kinks : bool
        Redraw a coordinate when the loss is not smooth within ``+-h`` of it,
        detected as central differences at ``h`` and ``h / 10`` disagreeing
        by more than ``tol``. A ReLU unit whose input sits within ``h`` of
        zero causes this. The test never looks at the analytic gradient, so
        it cannot hide a wrong one. Rejections are counted in the result.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    def central(flat, idx, step):
        old = flat[idx]
        flat[idx] = old + step
        up = float(loss_fn().data)
        flat[idx] = old - step
        down = float(loss_fn().data)
        flat[idx] = old
        return (up - down) / (2 * step)

    worst, worst_at, count, rejected, complete = 0.0, (), 0, 0, True
    for ti, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        order = rng.permutation(flat.size)
        checked = skipped = 0
        for idx in order:
            if checked == n_points:
                break
            numeric = central(flat, idx, h)
            if reject_kinks and _rel_error(central(flat, idx, h / 10), numeric, floor) > tol:
                skipped += 1
                continue
            a = float(analytic[ti].reshape(-1)[idx])
            err = _rel_error(a, numeric, floor)
            count += 1
            checked += 1
            if err > worst:
                worst, worst_at = err, (ti, int(idx), a, numeric)
        rejected += skipped
        # a tensor must get n_points checks, or all of its smooth coordinates and at least one
        complete &= checked == min(n_points, flat.size - skipped) and checked > 0
    return GradCheckResult(worst, count, worst_at, worst < tol and complete, rejected)
