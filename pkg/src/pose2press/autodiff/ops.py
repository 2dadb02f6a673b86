"""Differentiable operations: exactly the layer set the pressure network needs.

All image tensors are channels-last ``(B, H, W, C)``.  Convolutions use
same-padding with zeros so spatial dimensions survive residual sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, ShapeError
from . import _kernels
from .tensor import Tensor, from_op

_MODES = ("train", "eval")


def _check_mode(mode: str) -> None:
    if mode not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {mode!r}")


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out[n, o] = sum_i x[n, i] * weight[i, o] + bias[o]."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError(
            f"fully_connected expects x (B,I), weight (I,O), bias (O); got "
            f"{x.shape}, {weight.shape}, {bias.shape}"
        )
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"fully_connected dimension mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out = x.data @ weight.data + bias.data

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g @ weight.data.T, own=True)
        weight.accumulate_grad(x.data.T @ g, own=True)
        bias.accumulate_grad(g.sum(axis=0), own=True)

    return from_op(out, (x, weight, bias), backward)


def _pad_same(data: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    return np.pad(data, ((0, 0), (p, p), (p, p), (0, 0)))


def separable_conv2d(x: Tensor, depthwise: Tensor, pointwise: Tensor, bias: Tensor) -> Tensor:
    """Depthwise k-by-k spatial filter per channel, then 1x1 channel mixing.

    Shapes: x (B,H,W,Cin), depthwise (k,k,Cin), pointwise (Cin,Cout),
    bias (Cout) -> (B,H,W,Cout).  k must be odd (same-padding).
    """
    if x.data.ndim != 4:
        raise ShapeError(f"separable_conv2d expects x (B,H,W,C), got {x.shape}")
    k = depthwise.shape[0]
    if depthwise.data.ndim != 3 or depthwise.shape[1] != k:
        raise ShapeError(f"depthwise kernel must be (k,k,Cin), got {depthwise.shape}")
    if k % 2 == 0:
        raise ConfigError(f"separable_conv2d kernel size must be odd, got {k}")
    cin = x.shape[3]
    if depthwise.shape[2] != cin or pointwise.shape[0] != cin:
        raise ShapeError(
            f"channel mismatch: x has {cin} channels, depthwise {depthwise.shape}, pointwise {pointwise.shape}"
        )
    if bias.shape != (pointwise.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match Cout={pointwise.shape[1]}")

    b, h, w, _ = x.shape
    xp = _pad_same(x.data, k)
    mid = _kernels.depthwise_forward(xp, depthwise.data, h, w)
    out = mid.reshape(-1, cin) @ pointwise.data + bias.data
    out = out.reshape(b, h, w, pointwise.shape[1])

    def backward(g: np.ndarray) -> None:
        gflat = g.reshape(-1, pointwise.shape[1])
        pointwise.accumulate_grad(mid.reshape(-1, cin).T @ gflat, own=True)
        bias.accumulate_grad(gflat.sum(axis=0), own=True)
        gmid = (gflat @ pointwise.data.T).reshape(b, h, w, cin)
        gdw, gxp = _kernels.depthwise_backward(xp, depthwise.data, gmid)
        depthwise.accumulate_grad(gdw, own=True)
        p = k // 2
        x.accumulate_grad(gxp[:, p : p + h, p : p + w, :], own=True)

    return from_op(out, (x, depthwise, pointwise, bias), backward)


def conv2d_1x1(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-site channel mixing: fully_connected applied at every spatial site."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d_1x1 expects x (B,H,W,C), got {x.shape}")
    if weight.data.ndim != 2 or x.shape[3] != weight.shape[0]:
        raise ShapeError(f"conv2d_1x1 weight {weight.shape} does not match input channels {x.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match Cout={weight.shape[1]}")
    b, h, w, cin = x.shape
    cout = weight.shape[1]
    out = (x.data.reshape(-1, cin) @ weight.data + bias.data).reshape(b, h, w, cout)

    def backward(g: np.ndarray) -> None:
        gflat = g.reshape(-1, cout)
        x.accumulate_grad((gflat @ weight.data.T).reshape(x.shape), own=True)
        weight.accumulate_grad(x.data.reshape(-1, cin).T @ gflat, own=True)
        bias.accumulate_grad(gflat.sum(axis=0), own=True)

    return from_op(out, (x, weight, bias), backward)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Plain (non-separable) same-padded convolution, kernel (k,k,Cin,Cout)."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects x (B,H,W,C) and kernel (k,k,Cin,Cout); got {x.shape}, {kernel.shape}")
    k = kernel.shape[0]
    if kernel.shape[1] != k:
        raise ShapeError(f"conv2d kernel must be square, got {kernel.shape}")
    if k % 2 == 0:
        raise ConfigError(f"conv2d kernel size must be odd, got {k}")
    cin, cout = kernel.shape[2], kernel.shape[3]
    if x.shape[3] != cin:
        raise ShapeError(f"conv2d input channels {x.shape[3]} do not match kernel {kernel.shape}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} does not match Cout={cout}")

    b, h, w, _ = x.shape
    xp = _pad_same(x.data, k)
    out = _kernels.conv_forward(xp, kernel.data, h, w)
    out += bias.data

    def backward(g: np.ndarray) -> None:
        gk, gxp = _kernels.conv_backward(xp, kernel.data, g)
        kernel.accumulate_grad(gk, own=True)
        bias.accumulate_grad(g.reshape(-1, cout).sum(axis=0), own=True)
        p = k // 2
        x.accumulate_grad(gxp[:, p : p + h, p : p + w, :], own=True)

    return from_op(out, (x, kernel, bias), backward)


def upsample_nearest2d(x: Tensor, scale: tuple) -> Tensor:
    """Replicate rows/columns: out[y, x] = in[y // sy, x // sx]."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest2d expects x (B,H,W,C), got {x.shape}")
    sy, sx = int(scale[0]), int(scale[1])
    if sy < 1 or sx < 1 or (sy, sx) != (scale[0], scale[1]):
        raise ConfigError(f"upsample scales must be integers >= 1, got {scale}")
    out = x.data.repeat(sy, axis=1).repeat(sx, axis=2)
    b, h, w, c = x.shape

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g.reshape(b, h, sy, w, sx, c).sum(axis=(2, 4)), own=True)

    return from_op(out, (x,), backward)


@dataclass
class BatchNormState:
    """Running statistics for eval-mode normalization.

    ``momentum`` is the fraction of the previous running value kept per
    train-mode call; variances are population (divide by N) throughout.
    """

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99
    epsilon: float = 1e-5

    @classmethod
    def for_channels(cls, channels: int, momentum: float = 0.99, epsilon: float = 1e-5,
                     dtype=np.float32) -> "BatchNormState":
        return cls(
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str) -> Tensor:
    """Per-channel normalization over (B, H, W), then scale and shift.

    Train mode normalizes by batch statistics and updates the running
    stats; eval mode uses the running stats (their initial values before
    any train step are mean 0, var 1).
    """
    _check_mode(mode)
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm2d expects x (B,H,W,C), got {x.shape}")
    c = x.shape[3]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}")

    eps = state.epsilon
    if mode == "train":
        out, xhat, mu, var, inv_std = _kernels.bn_forward_train(x.data, gamma.data, beta.data, eps)
        m = state.momentum
        state.running_mean = (m * state.running_mean + (1.0 - m) * mu).astype(state.running_mean.dtype)
        state.running_var = (m * state.running_var + (1.0 - m) * var).astype(state.running_var.dtype)

        def backward(g: np.ndarray) -> None:
            # mean and variance both depend on x; the fused kernel applies
            # the full batch-statistics chain rule
            gx, ggamma, gbeta = _kernels.bn_backward_train(g, xhat, gamma.data, inv_std)
            gamma.accumulate_grad(ggamma, own=True)
            beta.accumulate_grad(gbeta, own=True)
            x.accumulate_grad(gx, own=True)

        return from_op(out, (x, gamma, beta), backward)

    inv_std = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (x.data - state.running_mean) * inv_std
    out = gamma.data * xhat + beta.data

    def backward_eval(g: np.ndarray) -> None:
        gamma.accumulate_grad((g * xhat).sum(axis=(0, 1, 2)), own=True)
        beta.accumulate_grad(g.sum(axis=(0, 1, 2)), own=True)
        x.accumulate_grad((g * gamma.data * inv_std).astype(x.data.dtype, copy=False), own=True)

    return from_op(out.astype(x.data.dtype, copy=False), (x, gamma, beta), backward_eval)


def spatial_dropout(x: Tensor, rate: float, mode: str, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Zero whole channels per sample with probability ``rate`` (train mode only).

    Survivors are scaled by 1/(1-rate) so expectations match eval mode,
    where the op is the identity.
    """
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if x.data.ndim != 4:
        raise ShapeError(f"spatial_dropout expects x (B,H,W,C), got {x.shape}")
    if mode == "eval" or rate == 0.0:
        def backward_id(g: np.ndarray) -> None:
            x.accumulate_grad(g)

        return from_op(x.data.copy(), (x,), backward_id)

    if rng is None:
        raise ConfigError("spatial_dropout in train mode with rate > 0 needs an rng")
    b, _, _, c = x.shape
    keep = (rng.random((b, 1, 1, c)) >= rate).astype(x.data.dtype)
    scale = keep / np.asarray(1.0 - rate, dtype=x.data.dtype)

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g * scale, own=True)

    return from_op(x.data * scale, (x,), backward)


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    """x if x >= 0 else alpha * x; the subgradient at 0 is taken as 1."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {alpha}")
    out = _kernels.leaky_forward(x.data, alpha)

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(_kernels.leaky_backward(g, x.data, alpha), own=True)

    return from_op(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    """1 / (1 + exp(-x)), computed without overflow for large |x|."""
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g: np.ndarray) -> None:
        # derivative from the pre-activation: e^-|x| / (1 + e^-|x|)^2.
        # out*(1-out) rounds to exactly 0 once float32 saturates, freezing
        # training permanently; this form keeps saturated units recoverable.
        e = np.exp(-np.abs(x.data))
        x.accumulate_grad(g * (e / np.square(1.0 + e)), own=True)

    return from_op(out, (x,), backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).mean(), dtype=pred.data.dtype)

    def backward(g: np.ndarray) -> None:
        scaled = (2.0 / n) * g * diff
        pred.accumulate_grad(scaled, own=True)
        target.accumulate_grad(-scaled, own=True)

    return from_op(out, (pred, target), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return from_op(out, (a, b), backward)


def mul_constant(x: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise multiply by a fixed array broadcast over leading axes."""
    const = np.asarray(const, dtype=x.data.dtype)
    out = x.data * const
    if out.shape != x.shape:
        raise ShapeError(f"constant {const.shape} must broadcast onto x {x.shape} without growing it")

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g * const, own=True)

    return from_op(out, (x,), backward)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g: np.ndarray) -> None:
        x.accumulate_grad(g.reshape(x.shape))

    return from_op(out, (x,), backward)


def crop2d(x: Tensor, height: int, width: int) -> Tensor:
    """Top-left spatial crop; backward zero-pads back to the input size."""
    if x.data.ndim != 4:
        raise ShapeError(f"crop2d expects x (B,H,W,C), got {x.shape}")
    if height > x.shape[1] or width > x.shape[2]:
        raise ShapeError(f"crop ({height},{width}) exceeds input ({x.shape[1]},{x.shape[2]})")
    out = x.data[:, :height, :width, :].copy()

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx[:, :height, :width, :] = g
        x.accumulate_grad(gx, own=True)

    return from_op(out, (x,), backward)
