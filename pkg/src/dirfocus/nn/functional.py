"""Differentiable layer operations on :class:`~dirfocus.nn.tensor.Tensor`.

Layouts follow the usual channels-first convention: ``(batch, channels, *spatial)``.
"""

from __future__ import annotations

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor

__all__ = [
    "conv",
    "conv_output_shape",
    "batch_norm",
    "linear",
    "relu",
    "avg_pool_time",
    "flatten",
    "concat",
    "softmax",
    "softmax_cross_entropy",
]

# im2col buffers are built in batch chunks of at most this many float64 values
_IM2COL_BUDGET = 8_000_000
# columns are kept for the weight gradient when they fit in this many values
_CACHE_BUDGET = 40_000_000


def conv_output_shape(in_shape, kernel, stride, padding) -> tuple:
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(in_shape, kernel, stride, padding))


def _tuple(v, n):
    if np.isscalar(v):
        return (int(v),) * n
    v = tuple(int(a) for a in v)
    if len(v) != n:
        raise ValueError(f"expected {n} values, got {v}")
    return v


def conv(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """N-d cross-correlation.

    Parameters
    ----------
    x : Tensor, shape (B, C_in, *spatial)
    weight : Tensor, shape (C_out, C_in, *kernel)
    bias : Tensor, shape (C_out,), optional
    stride, padding : int or tuple
        Per spatial dimension. Padding is symmetric zero padding.

    Returns
    -------
    Tensor, shape (B, C_out, *out) with
    ``out = floor((in + 2*pad - k) / stride) + 1``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    nd = weight.ndim - 2
    if nd < 1 or x.ndim != nd + 2:
        raise ValueError(f"conv shape mismatch: input {x.shape}, kernels {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv shape mismatch: input {x.shape} has {x.shape[1]} channels, kernels {weight.shape} expect {weight.shape[1]}"
        )
    stride, padding = _tuple(stride, nd), _tuple(padding, nd)
    ksize = weight.shape[2:]
    out_sp = conv_output_shape(x.shape[2:], ksize, stride, padding)
    if any(o < 1 for o in out_sp):
        raise ValueError(f"conv shape mismatch: kernels {weight.shape} do not fit input {x.shape}")

    B, c_in = x.shape[:2]
    c_out = weight.shape[0]
    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in padding])
    w2 = weight.data.reshape(c_out, -1)  # (C_out, C_in * prod(k))
    sp_axes = tuple(range(2, 2 + nd))
    slicer = tuple(slice(None, None, s) for s in stride)
    n_out = int(np.prod(out_sp))
    col_width = w2.shape[1]
    chunk = max(1, _IM2COL_BUDGET // max(1, n_out * col_width))

    def columns(b0, b1):
        win = sliding_window_view(xp[b0:b1], ksize, axis=sp_axes)
        win = win[(slice(None), slice(None)) + slicer]
        # (b, C_in, *out, *k) -> (b, *out, C_in, *k)
        perm = (0,) + tuple(range(2, 2 + nd)) + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
        return win.transpose(perm).reshape(-1, col_width)

    keep = weight.requires_grad and B * n_out * col_width <= _CACHE_BUDGET
    cache = {}
    out = np.empty((B, n_out, c_out))
    for b0 in range(0, B, chunk):
        b1 = min(B, b0 + chunk)
        cols = columns(b0, b1)
        if keep:
            cache[b0] = cols
        out[b0:b1] = (cols @ w2.T).reshape(b1 - b0, n_out, c_out)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
    y = out.transpose(0, 2, 1).reshape((B, c_out) + out_sp)

    def back(g):
        g3 = g.reshape(B, c_out, n_out)
        gw = np.zeros_like(w2) if weight.requires_grad else None
        gx = np.zeros_like(xp) if x.requires_grad else None
        for b0 in range(0, B, chunk):
            b1 = min(B, b0 + chunk)
            gb = g3[b0:b1]  # (b, C_out, n_out), no copy
            if gw is not None:
                cols = cache[b0] if keep else columns(b0, b1)
                gw += np.matmul(gb, cols.reshape(b1 - b0, n_out, col_width)).sum(axis=0)
            if gx is not None:
                # (b, C_in, *k, *out): every tap slice is contiguous along the output axes
                gcol = np.matmul(w2.T, gb).reshape((b1 - b0, c_in) + tuple(ksize) + out_sp)
                # scatter every kernel tap back onto the padded input
                for offs in itertools.product(*(range(k) for k in ksize)):
                    dst = tuple(slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offs, stride, out_sp))
                    gx[(slice(b0, b1), slice(None)) + dst] += gcol[(slice(None), slice(None)) + offs]
        grads = [None, None, None]
        if gx is not None:
            crop = tuple(slice(p, p + n) for p, n in zip(padding, x.shape[2:]))
            grads[0] = gx[(slice(None), slice(None)) + crop]
        if gw is not None:
            grads[1] = gw.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            grads[2] = g.sum(axis=(0,) + sp_axes)
        return tuple(grads)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor.from_op(y, parents, back, f"conv{nd}d")


def batch_norm(x, gamma, beta, running_mean=None, running_var=None, training=True,
               momentum=0.1, eps=1e-5) -> Tensor:
    """Per-channel normalisation over every axis except axis 1.

    In training mode batch statistics are used and, when running buffers are
    supplied, those buffers are updated in place. In evaluation mode the
    running buffers are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    gm = gamma.data.reshape(bshape)

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            m = x.data.size / x.shape[1]
            running_mean *= 1 - momentum
            running_mean += momentum * mu
            running_var *= 1 - momentum
            running_var += momentum * var * (m / max(m - 1, 1))
    else:
        if running_mean is None:
            raise ValueError("evaluation-mode batch norm needs running statistics")
        mu, var = running_mean, running_var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    y = gm * xhat + beta.data.reshape(bshape)

    def back(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        if training:
            m = x.data.size / x.shape[1]
            gxhat = g * gm
            gx = (inv.reshape(bshape) / m) * (
                m * gxhat - gxhat.sum(axis=axes).reshape(bshape)
                - xhat * (gxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = g * (gm * inv.reshape(bshape))
        return gx, gg, gb

    return Tensor.from_op(y, (x, gamma, beta), back, "batch_norm")


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (B, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    out = x @ weight.transpose(1, 0)
    return out if bias is None else out + bias


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def avg_pool_time(x) -> Tensor:
    """Average over the last (time) axis, keeping it as length 1."""
    return as_tensor(x).mean(axis=-1, keepdims=True)


def flatten(x) -> Tensor:
    x = as_tensor(x)
    return x.reshape(x.shape[0], -1)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(out, tuple(tensors), back, "concat")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under ``softmax(logits)``."""
    return softmax_cross_entropy_with_probs(logits, labels)[0]


def softmax_cross_entropy_with_probs(logits, labels):
    """Like :func:`softmax_cross_entropy`, also returning the class probabilities."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"need logits (B, K) and labels (B,), got {logits.shape} and {labels.shape}")
    B = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    probs = np.exp(logp)
    loss = -logp[np.arange(B), labels].mean()

    def back(g):
        d = probs.copy()
        d[np.arange(B), labels] -= 1.0
        return (d * (g / B),)

    return Tensor.from_op(loss, (logits,), back, "softmax_xent"), probs
