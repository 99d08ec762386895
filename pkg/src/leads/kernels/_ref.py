"""Pure-numpy reference implementations of the hot numeric kernels.

Every function here has a matching compiled twin in ``_core.pyx``; the
package selects one implementation at import time (see ``__init__``).
Shapes follow the conventions of the model code: weight matrices are
``[out, in]``, batched inputs are ``[batch, dim]``, convolution fields
are ``[batch, channels, H, W]`` with circular (periodic) padding.
"""

import numpy as np

BACKEND_NAME = "numpy"


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def swish_fwd(z):
    """Return (swish(z), sigmoid(z)); the sigmoid is reused by the backward."""
    s = sigmoid(z)
    return z * s, s


def swish_bwd(gy, z, s):
    return gy * (s * (1.0 + z * (1.0 - s)))


def mlp4_fwd(x, params):
    """Forward pass of the 4-layer perceptron with swish between layers.

    ``params`` is ``[W1, b1, W2, b2, W3, b3, W4, b4]``; the final layer is
    affine with no activation. Returns ``(y, cache)`` where the cache holds
    per-layer pre-activations, sigmoids and activations for the backward.
    """
    W1, b1, W2, b2, W3, b3, W4, b4 = params
    z1 = x @ W1.T + b1
    a1, s1 = swish_fwd(z1)
    z2 = a1 @ W2.T + b2
    a2, s2 = swish_fwd(z2)
    z3 = a2 @ W3.T + b3
    a3, s3 = swish_fwd(z3)
    y = a3 @ W4.T + b4
    return y, (z1, s1, a1, z2, s2, a2, z3, s3, a3)


def mlp4_bwd(gy, x, params, cache):
    """Backward of mlp4_fwd. Returns (gx, [gW1, gb1, ..., gW4, gb4])."""
    W1, b1, W2, b2, W3, b3, W4, b4 = params
    z1, s1, a1, z2, s2, a2, z3, s3, a3 = cache
    gW4 = gy.T @ a3
    gb4 = gy.sum(axis=0)
    ga3 = gy @ W4
    gz3 = swish_bwd(ga3, z3, s3)
    gW3 = gz3.T @ a2
    gb3 = gz3.sum(axis=0)
    ga2 = gz3 @ W3
    gz2 = swish_bwd(ga2, z2, s2)
    gW2 = gz2.T @ a1
    gb2 = gz2.sum(axis=0)
    ga1 = gz2 @ W2
    gz1 = swish_bwd(ga1, z1, s1)
    gW1 = gz1.T @ x
    gb1 = gz1.sum(axis=0)
    gx = gz1 @ W1
    return gx, [gW1, gb1, gW2, gb2, gW3, gb3, gW4, gb4]


RK4_WEIGHTS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


def _sum_nets(x, sets):
    y = None
    caches = []
    for params in sets:
        yi, cache = mlp4_fwd(x, params)
        caches.append(cache)
        y = yi if y is None else y + yi
    return y, caches


def rk4_pair_fwd(x, sets, h):
    """Classical RK4 step of d/dt = sum of MLPs (one or two nets).

    Returns (y, cache); the cache layout is backend-private and is only
    consumed by the matching rk4_pair_bwd.
    """
    k1, c1 = _sum_nets(x, sets)
    a2 = x + (0.5 * h) * k1
    k2, c2 = _sum_nets(a2, sets)
    a3 = x + (0.5 * h) * k2
    k3, c3 = _sum_nets(a3, sets)
    a4 = x + h * k3
    k4, c4 = _sum_nets(a4, sets)
    y = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y, ((x, a2, a3, a4), (c1, c2, c3, c4))


def rk4_pair_bwd(gy, x, sets, h, cache):
    """Backward of rk4_pair_fwd: returns (gx, [per-net param grads])."""
    stage_inputs, stage_caches = cache
    gparams = [[None] * 8 for _ in sets]

    def vjp(stage, gk):
        ga = None
        for si, params in enumerate(sets):
            gxi, gps = mlp4_bwd(gk, stage_inputs[stage], params, stage_caches[stage][si])
            acc = gparams[si]
            for j in range(8):
                acc[j] = gps[j] if acc[j] is None else acc[j] + gps[j]
            ga = gxi if ga is None else ga + gxi
        return ga

    gk4 = (h * RK4_WEIGHTS[3]) * gy
    ga4 = vjp(3, gk4)
    gk3 = (h * RK4_WEIGHTS[2]) * gy + h * ga4
    ga3 = vjp(2, gk3)
    gk2 = (h * RK4_WEIGHTS[1]) * gy + (0.5 * h) * ga3
    ga2 = vjp(1, gk2)
    gk1 = (h * RK4_WEIGHTS[0]) * gy + (0.5 * h) * ga2
    gx = gy + ga2 + ga3 + ga4 + vjp(0, gk1)
    return gx, gparams


def conv2d_circ_fwd(x, k, b):
    """Circularly padded cross-correlation.

    ``x`` is [B, C, H, W], ``k`` is [O, C, kh, kw] (odd kh, kw), ``b`` is [O].
    Output pixel (i, j) sees input pixels (i + p - kh//2, j + q - kw//2)
    wrapped periodically.
    """
    B, C, H, W = x.shape
    O, _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    y = np.broadcast_to(b.reshape(1, O, 1, 1), (B, O, H, W)).copy()
    for p in range(kh):
        for q in range(kw):
            shifted = np.roll(x, shift=(ph - p, pw - q), axis=(2, 3))
            y += np.einsum("oc,bchw->bohw", k[:, :, p, q], shifted)
    return y


def conv2d_circ_bwd(gy, x, k):
    """Backward of conv2d_circ_fwd. Returns (gx, gk, gb)."""
    B, C, H, W = x.shape
    O, _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    for p in range(kh):
        for q in range(kw):
            shifted = np.roll(x, shift=(ph - p, pw - q), axis=(2, 3))
            gk[:, :, p, q] = np.einsum("bohw,bchw->oc", gy, shifted)
            gx += np.roll(
                np.einsum("oc,bohw->bchw", k[:, :, p, q], gy),
                shift=(p - ph, q - pw),
                axis=(2, 3),
            )
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gk, gb


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, applied to ``p``, ``m``, ``v`` in place."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mh = m / (1.0 - beta1**t)
    vh = v / (1.0 - beta2**t)
    p -= lr * mh / (np.sqrt(vh) + eps)
