"""Layer containers: parameter creation, naming, and forward wiring.

Weights use fan-in-scaled uniform init U(-1/sqrt(fan_in), +1/sqrt(fan_in));
biases start at zero, batch-norm at gamma=1 / beta=0.  Construction order
is fixed, so one seeded generator reproduces a model bit for bit.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import ops
from .ops import BatchNormState
from .tensor import Parameter, Tensor


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear:
    def __init__(self, in_features: int, out_features: int, name: str,
                 rng: np.random.Generator, dtype=np.float32):
        self.weight = Parameter(_uniform(rng, (in_features, out_features), in_features, dtype),
                                name=f"{name}.weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class SeparableConv2d:
    def __init__(self, kernel_size: int, in_channels: int, out_channels: int, name: str,
                 rng: np.random.Generator, dtype=np.float32):
        k = kernel_size
        self.depthwise = Parameter(_uniform(rng, (k, k, in_channels), k * k, dtype),
                                   name=f"{name}.depthwise")
        self.pointwise = Parameter(_uniform(rng, (in_channels, out_channels), in_channels, dtype),
                                   name=f"{name}.pointwise")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.separable_conv2d(x, self.depthwise, self.pointwise, self.bias)

    def parameters(self):
        return [self.depthwise, self.pointwise, self.bias]


class PointwiseConv2d:
    """1x1 projection across channels."""

    def __init__(self, in_channels: int, out_channels: int, name: str,
                 rng: np.random.Generator, dtype=np.float32):
        self.weight = Parameter(_uniform(rng, (in_channels, out_channels), in_channels, dtype),
                                name=f"{name}.weight")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d_1x1(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class Conv2d:
    """Plain (non-separable) same-padded convolution."""

    def __init__(self, kernel_size: int, in_channels: int, out_channels: int, name: str,
                 rng: np.random.Generator, dtype=np.float32):
        k = kernel_size
        self.kernel = Parameter(
            _uniform(rng, (k, k, in_channels, out_channels), k * k * in_channels, dtype),
            name=f"{name}.kernel")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.kernel, self.bias)

    def parameters(self):
        return [self.kernel, self.bias]


class BatchNorm2d:
    def __init__(self, channels: int, name: str, momentum: float = 0.99,
                 epsilon: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(channels, dtype=dtype), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), name=f"{name}.beta")
        self.state = BatchNormState.for_channels(channels, momentum=momentum,
                                                 epsilon=epsilon, dtype=dtype)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        return ops.batch_norm2d(x, self.gamma, self.beta, self.state, mode)

    def parameters(self):
        return [self.gamma, self.beta]


class BatchNorm1d:
    """Per-feature batch norm over (B, F), via the 2d op on a (B,1,1,F) view."""

    def __init__(self, features: int, name: str, momentum: float = 0.99,
                 epsilon: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(features, dtype=dtype), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(features, dtype=dtype), name=f"{name}.beta")
        self.state = BatchNormState.for_channels(features, momentum=momentum,
                                                 epsilon=epsilon, dtype=dtype)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        batch, features = x.shape
        lifted = ops.reshape(x, (batch, 1, 1, features))
        out = ops.batch_norm2d(lifted, self.gamma, self.beta, self.state, mode)
        return ops.reshape(out, (batch, features))

    def parameters(self):
        return [self.gamma, self.beta]


class SpatialDropout:
    def __init__(self, rate: float):
        self.rate = rate

    def __call__(self, x: Tensor, mode: str, rng: Optional[np.random.Generator]) -> Tensor:
        return ops.spatial_dropout(x, self.rate, mode, rng)

    def parameters(self):
        return []
