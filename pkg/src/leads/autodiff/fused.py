"""Composite tape operations backed by the kernel layer.

Recording a whole 4-layer MLP evaluation (or a full RK4 step over a sum
of MLPs) as a single node removes almost all per-op tape overhead from
the training inner loop. The composed-op equivalents built from the
generic operations in :mod:`tensor` serve as oracles in the tests.
"""

import numpy as np

from leads import kernels
from leads.autodiff import tensor as T
from leads.errors import ShapeError

_RK4_WEIGHTS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


def _check_mlp_params(params, x):
    if len(params) != 8:
        raise ShapeError(f"mlp4 expects 8 parameter tensors, got {len(params)}")
    if x.ndim != 2 or params[0].data.shape[1] != x.shape[1]:
        raise ShapeError(
            f"mlp4: input {x.shape} for first layer {params[0].data.shape}"
        )


def mlp4(x, params):
    """4-layer MLP with swish between hidden layers, as one tape node."""
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    _check_mlp_params(params, x.data)
    pdata = [p.data for p in params]
    y, cache = kernels.mlp4_fwd(x.data, pdata)
    out = T.Tensor(y)

    def bwd(gy):
        gx, gps = kernels.mlp4_bwd(gy, x.data, pdata, cache)
        return (gx, *gps)

    return T.record("mlp4", out, (x, *params), bwd)


def rk4_mlp_step(x, h, param_sets):
    """One classical RK4 step of d/dt = sum of MLPs, fused into one node.

    ``param_sets`` is a list of 8-tensor MLP parameter lists (one entry for
    a single net, two for a shared-plus-residual pair). The whole step runs
    inside one kernel call per direction; gradients flow to the step input
    and to every parameter tensor.
    """
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    for params in param_sets:
        _check_mlp_params(params, x.data)
    h = float(h)
    sets_data = [[p.data for p in params] for params in param_sets]
    y, cache = kernels.rk4_pair_fwd(x.data, sets_data, h)
    out = T.Tensor(y)

    def bwd(gy):
        gx, gsets = kernels.rk4_pair_bwd(gy, x.data, sets_data, h, cache)
        return (gx, *[g for gs in gsets for g in gs])

    inputs = (x, *[p for params in param_sets for p in params])
    return T.record("rk4_mlp_step", out, inputs, bwd)


def linear_propagator(mats, h):
    """RK4 one-step propagator of d/dt = (sum of matrices) x, as one node.

    For a linear field the four RK4 stages collapse to the degree-4 Taylor
    polynomial Phi(A) = I + hA + ... + (hA)^4/24 with A = sum(mats). The
    propagator is step-independent, so rollouts reuse it for every step.
    """
    d = mats[0].data.shape[0]
    for M in mats:
        if M.data.shape != (d, d):
            raise ShapeError(f"linear_propagator: matrix {M.data.shape}, want ({d}, {d})")
    h = float(h)
    A = mats[0].data.copy()
    for M in mats[1:]:
        A = A + M.data
    coeffs = (h, h * h / 2.0, h**3 / 6.0, h**4 / 24.0)
    powers = [np.eye(d)]
    for _ in range(4):
        powers.append(powers[-1] @ A)
    Phi = powers[0] + sum(c * P for c, P in zip(coeffs, powers[1:]))
    out = T.Tensor(Phi)

    def bwd(gPhi):
        # d(A^n) adjoint: sum over split positions of (A^T)^i gPhi (A^T)^(n-1-i)
        gA = np.zeros_like(A)
        for n, c in enumerate(coeffs, start=1):
            for i in range(n):
                gA += c * (powers[i].T @ gPhi @ powers[n - 1 - i].T)
        return tuple(gA.copy() for _ in mats)

    return T.record("linear_propagator", out, tuple(mats), bwd)


def apply_propagator(x, phi):
    """y = x @ Phi^T for row-vector states (batched or single)."""
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    squeeze = x.data.ndim == 1
    xd = x.data[None] if squeeze else x.data
    y = xd @ phi.data.T
    out = T.Tensor(y[0] if squeeze else y)

    def bwd(gy):
        gy2 = gy[None] if squeeze else gy
        return gy2 @ phi.data, gy2.T @ xd

    return T.record("apply_propagator", out, (x, phi), bwd)


def rk4_linear_step(x, h, mats):
    """One RK4 step of a linear evolution term (see linear_propagator)."""
    return apply_propagator(x, linear_propagator(mats, h))


def scheduled_restart(pred, truth_k, keep_rows):
    """Rowwise select: keep the prediction where keep_rows, else restart
    from the observed state (a constant). Gradients flow to kept rows only."""
    pred = pred if isinstance(pred, T.Tensor) else T.Tensor(pred)
    keep = keep_rows.reshape((-1,) + (1,) * (pred.data.ndim - 1))
    out = T.Tensor(np.where(keep, pred.data, truth_k))

    def bwd(gy):
        return (np.where(keep, gy, 0.0),)

    return T.record("scheduled_restart", out, (pred,), bwd)


def squared_error(pred, target):
    """Summed squared error against a constant target, as one node."""
    pred = pred if isinstance(pred, T.Tensor) else T.Tensor(pred)
    diff = pred.data - target
    out = T.Tensor(np.asarray((diff * diff).sum()))

    def bwd(gy):
        return (2.0 * gy * diff,)

    return T.record("squared_error", out, (pred,), bwd)


def sum_scalars(terms):
    """Sum of scalar tensors as a single node."""
    out = T.Tensor(np.asarray(sum(float(t.data) for t in terms)))

    def bwd(gy):
        return tuple(gy for _ in terms)

    return T.record("sum_scalars", out, tuple(terms), bwd)
