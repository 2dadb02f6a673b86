"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from .optim import zero_grads
from .tensor import Tensor


@dataclass
class GradCheckReport:
    per_parameter: dict
    max_relative_error: float
    worst_parameter: str

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance


def grad_check(
    build_loss: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    samples_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    denominator_floor: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar loss against central differences.

    ``build_loss`` must rebuild the forward pass from the current parameter
    values and be deterministic across calls (dropout off or identically
    seeded).  Parameters must be float64 for the documented tolerances to
    be meaningful.  ``samples_per_param`` limits the checked entries per
    parameter (all entries when None).

    The per-entry error is |analytic - numeric| / max(|analytic|, |numeric|,
    denominator_floor); the floor keeps finite-difference noise on genuinely
    zero gradients from registering as relative error.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise ConfigError(f"grad_check requires float64 parameters, got {p.data.dtype}")

    zero_grads(params)
    loss = build_loss()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    per_parameter: dict = {}
    worst_name = ""
    worst = 0.0
    for idx, p in enumerate(params):
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_param is None or samples_per_param >= n:
            indices = np.arange(n)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            indices = rng.choice(n, size=samples_per_param, replace=False)
        param_worst = 0.0
        a_flat = analytic[idx].reshape(-1)
        for i in indices:
            saved = flat[i]
            flat[i] = saved + h
            up = build_loss().item()
            flat[i] = saved - h
            down = build_loss().item()
            flat[i] = saved
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[i]), abs(numeric), denominator_floor)
            param_worst = max(param_worst, abs(a_flat[i] - numeric) / denom)
        name = getattr(p, "name", "") or f"param{idx}"
        per_parameter[name] = param_worst
        if param_worst >= worst:
            worst = param_worst
            worst_name = name
    return GradCheckReport(per_parameter=per_parameter, max_relative_error=worst, worst_parameter=worst_name)
