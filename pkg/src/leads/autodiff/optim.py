"""Adam optimizer with bias correction, operating on tensor lists."""

from dataclasses import dataclass, field

import numpy as np

from leads import kernels
from leads.errors import ContractError


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        state = cls(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, state):
    """Apply one bias-corrected Adam update to every parameter in place.

    All parameters must carry a populated gradient; ``state.step`` advances
    by exactly one.
    """
    if len(state.m) != len(params):
        raise ContractError(
            f"adam_step: state tracks {len(state.m)} params, got {len(params)}"
        )
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {i} has no gradient")
    state.step += 1
    for p, m, v in zip(params, state.m, state.v):
        kernels.adam_update(
            p.data, p.grad, m, v, state.step, state.lr, state.beta1, state.beta2, state.eps
        )


def zero_grads(params):
    for p in params:
        p.zero_grad()
