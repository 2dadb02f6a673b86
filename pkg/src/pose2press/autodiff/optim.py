"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from . import _kernels
from .tensor import Parameter


@dataclass
class AdamState:
    """Optimizer state; ``m``/``v`` are allocated lazily per parameter."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"Adam epsilon must be positive, got {self.epsilon}")


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    """One Adam update over ``params``, reading gradients from ``p.grad``.

    The parameter order must stay fixed across steps; moment buffers are
    keyed by position.
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    elif len(state.m) != len(params):
        raise ConfigError(
            f"Adam state tracks {len(state.m)} parameters but step got {len(params)}"
        )
    for p in params:
        if p.grad is None:
            raise ConfigError(f"parameter {p.name!r} has no gradient this step")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        _kernels.adam_update(p.data, p.grad, state.m[i], state.v[i],
                             state.learning_rate, b1, b2, state.epsilon, bias1, bias2)


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()
