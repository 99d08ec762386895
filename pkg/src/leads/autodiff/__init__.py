from leads.autodiff.tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    backward,
    conv2d_circular,
    matmul,
    mean,
    mul,
    record,
    reshape,
    scale,
    sqnorm,
    sub,
    sum_,
    swish,
)
from leads.autodiff.fused import mlp4, rk4_linear_step, rk4_mlp_step
from leads.autodiff.optim import AdamState, adam_step, zero_grads
from leads.autodiff.spectral import PowerIterState, spectral_norm

__all__ = [
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "conv2d_circular",
    "matmul",
    "mean",
    "mul",
    "record",
    "reshape",
    "scale",
    "sqnorm",
    "sub",
    "sum_",
    "swish",
    "mlp4",
    "rk4_linear_step",
    "rk4_mlp_step",
    "AdamState",
    "adam_step",
    "zero_grads",
    "PowerIterState",
    "spectral_norm",
]
