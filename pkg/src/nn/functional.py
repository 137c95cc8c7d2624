"""Differentiable operators used by the depth regression networks."""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.nn.tensor import Operand, ShapeError, Tensor, as_tensor


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, dilation: int = 1) -> Tensor:
    """Length-preserving dilated 1D cross-correlation.

    x: (B, C_in, L); weight: (C_out, C_in, k) with k odd; bias: (C_out,).
    Zero padding of dilation * (k - 1) / 2 on both sides.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv1d input must be (batch, channels, length), got {x.shape}")
    c_out, c_in, k = weight.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"conv1d expects {c_in} input channels, got {x.shape[1]}")
    if k % 2 == 0:
        raise ShapeError(f"conv1d kernel size must be odd, got {k}")
    B, _, L = x.shape
    pad = dilation * (k - 1) // 2

    xpad = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    # cols[b, l, c, i] = xpad[b, c, l + i * dilation], flattened to (B*L, C*k)
    cols = np.stack([xpad[:, :, i * dilation:i * dilation + L] for i in range(k)], axis=-1)
    cols = cols.transpose(0, 2, 1, 3).reshape(B * L, c_in * k)
    w = weight.data.reshape(c_out, c_in * k)
    out = (cols @ w.T).reshape(B, L, c_out).transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        g2 = g.transpose(0, 2, 1).reshape(B * L, c_out)
        gw = (g2.T @ cols).reshape(c_out, c_in, k)
        gcols = (g2 @ w).reshape(B, L, c_in, k)
        gpad = np.zeros_like(xpad)
        for i in range(k):
            gpad[:, :, i * dilation:i * dilation + L] += gcols[..., i].transpose(0, 2, 1)
        gx = gpad[:, :, pad:pad + L]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward, "conv1d")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (batch, length) of a (B, C, L) input.

    In training mode batch statistics are used and the running buffers are
    updated in place as running = momentum * running + (1 - momentum) * batch.
    """
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batch_norm expects (B, {gamma.shape[0]}, L), got {x.shape}")
    g_ = gamma.data[None, :, None]
    b_ = beta.data[None, :, None]

    if training:
        n = x.shape[0] * x.shape[2]
        mean = x.data.mean(axis=(0, 2), keepdims=True)
        centered = x.data - mean
        var = (centered ** 2).mean(axis=(0, 2), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std

        unbiased = var.ravel() * (n / (n - 1) if n > 1 else 1.0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean.ravel()
        running_var *= momentum
        running_var += (1.0 - momentum) * unbiased

        def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
            gxhat = g * g_
            gx = inv_std / n * (
                n * gxhat
                - gxhat.sum(axis=(0, 2), keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
            )
            return gx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))
    else:
        inv_std = 1.0 / np.sqrt(running_var[None, :, None] + eps)
        xhat = (x.data - running_mean[None, :, None]) * inv_std

        def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
            return g * g_ * inv_std, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    return Tensor._make(xhat * g_ + b_, (x, gamma, beta), backward, "batch_norm")


def relu(x: Tensor) -> Tensor:
    return x.relu()


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return x.softmax(axis=axis)


def soft_argmax(probs: Tensor, depths: np.ndarray, axis: int = -1) -> Tensor:
    """Expected depth under normalized `probs` along `axis`."""
    shape = [1] * probs.ndim
    shape[axis] = -1
    return (probs * np.reshape(depths, shape)).sum(axis=axis)


def window_starts(probs: np.ndarray, window: int) -> np.ndarray:
    """Start index of the highest-mass window along the last axis (first on ties)."""
    D = probs.shape[-1]
    if not 1 <= window <= D:
        raise ValueError(f"window size must lie in [1, {D}], got {window}")
    sums = sliding_window_view(probs, window, axis=-1).sum(axis=-1)
    return np.argmax(sums, axis=-1)


def window_mask(starts: np.ndarray, window: int, length: int) -> np.ndarray:
    idx = np.arange(length)
    starts = np.asarray(starts)[..., None]
    return ((idx >= starts) & (idx < starts + window)).astype(np.float64)


def local_soft_argmax(
    probs: Tensor, depths: np.ndarray, window: int, starts: Optional[np.ndarray] = None
) -> Tensor:
    """Soft-argmax restricted to the highest-mass window of `window` planes.

    probs: (B, D). The window choice is piecewise constant, so gradients flow
    only through the ratio inside the selected window. `starts` pins the
    window positions instead of searching for them.
    """
    if starts is None:
        starts = window_starts(probs.data, window)
    mask = window_mask(starts, window, probs.shape[-1])
    return (probs * (mask * depths)).sum(axis=-1) / (probs * mask).sum(axis=-1)


def l1_loss(pred: Tensor, target: Operand) -> Tensor:
    """Sum of absolute errors."""
    return (pred - as_tensor(target)).abs().sum()
