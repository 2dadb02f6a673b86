from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .ops import (
    BatchNormState,
    add,
    batch_norm2d,
    conv2d,
    conv2d_1x1,
    crop2d,
    fully_connected,
    leaky_relu,
    mse_loss,
    mul_constant,
    reshape,
    separable_conv2d,
    sigmoid,
    spatial_dropout,
    upsample_nearest2d,
)
from .optim import AdamState, adam_step, zero_grads
from .tensor import Parameter, Tensor, finite_checks_enabled, grad_enabled, no_grad, set_finite_checks

__all__ = [
    "AdamState",
    "BatchNormState",
    "GradCheckReport",
    "Parameter",
    "Tensor",
    "adam_step",
    "add",
    "batch_norm2d",
    "conv2d",
    "conv2d_1x1",
    "crop2d",
    "finite_checks_enabled",
    "grad_enabled",
    "fully_connected",
    "grad_check",
    "leaky_relu",
    "load_checkpoint",
    "load_into",
    "mse_loss",
    "mul_constant",
    "no_grad",
    "reshape",
    "save_checkpoint",
    "separable_conv2d",
    "set_finite_checks",
    "sigmoid",
    "spatial_dropout",
    "upsample_nearest2d",
    "zero_grads",
]
