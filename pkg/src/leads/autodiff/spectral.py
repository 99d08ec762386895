"""Largest-singular-value estimation by power iteration.

The persistent left vector ``u`` follows the fast-approximation scheme
used for spectral weight penalties: one iteration per training step keeps
the estimate current while costing two matrix-vector products. The
returned value is differentiable with respect to the matrix only; the
iteration vectors are treated as constants, so the gradient of sigma is
the rank-one outer product u v^T.
"""

import numpy as np

from leads.autodiff import tensor as T
from leads.errors import ContractError, ShapeError


class PowerIterState:
    """Unit-norm left vector for one weight matrix, persisted across calls."""

    __slots__ = ("u",)

    def __init__(self, rows, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        u = rng.standard_normal(rows)
        self.u = u / np.linalg.norm(u)

    @classmethod
    def from_vector(cls, u):
        state = cls.__new__(cls)
        state.u = np.asarray(u, dtype=np.float64) / np.linalg.norm(u)
        return state


def spectral_norm(W, state, iters=1):
    """Estimate the spectral norm of a 2-D tensor, updating ``state.u``.

    Conv kernels must be reshaped to [out_channels, in_channels*kh*kw]
    before calling. A zero matrix yields 0 and leaves the state untouched.
    """
    if not isinstance(W, T.Tensor):
        W = T.Tensor(W)
    if W.data.ndim != 2:
        raise ShapeError(f"spectral_norm expects a matrix, got shape {W.data.shape}")
    if iters < 1:
        raise ContractError("spectral_norm: iters must be >= 1")
    Wd = W.data
    if state.u.shape != (Wd.shape[0],):
        raise ShapeError(
            f"spectral_norm: state dimension {state.u.shape[0]} for matrix {Wd.shape}"
        )
    u = state.u
    v = None
    for _ in range(iters):
        wv = Wd.T @ u
        nv = np.linalg.norm(wv)
        if nv == 0.0:
            return T.Tensor(0.0)
        v = wv / nv
        wu = Wd @ v
        nu = np.linalg.norm(wu)
        if nu == 0.0:
            return T.Tensor(0.0)
        u = wu / nu
    state.u = u
    sigma = float(u @ Wd @ v)
    out = T.Tensor(sigma)
    uv = np.outer(u, v)

    def bwd(gy):
        return (gy * uv,)

    return T.record("spectral_norm", out, (W,), bwd)
