"""Independent oracles used across the test suite.

These deliberately avoid the library's own computational paths: finite
differences for gradients, Jacobi rotations for singular values, direct
quadruple loops for convolution, and matrix exponentials for the linear
system's closed form.
"""

import numpy as np


def finite_difference_grads(loss_fn, tensors, h=1e-6, coords=None, rng=None):
    """Central-difference gradients of a scalar loss w.r.t. tensor leaves.

    ``loss_fn`` must re-evaluate the loss from the tensors' current data.
    Returns a list of (tensor_index, flat_coordinate, derivative). When
    ``coords`` is an integer, that many coordinates are sampled per tensor
    with ``rng``; otherwise every coordinate is probed.
    """
    out = []
    for ti, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        if coords is None:
            idx = range(flat.size)
        else:
            take = min(coords, flat.size)
            idx = rng.choice(flat.size, size=take, replace=False)
        for ci in idx:
            ci = int(ci)
            orig = flat[ci]
            flat[ci] = orig + h
            up = loss_fn()
            flat[ci] = orig - h
            down = loss_fn()
            flat[ci] = orig
            out.append((ti, ci, (up - down) / (2.0 * h)))
    return out


def max_rel_error(fd_entries, tensors, floor=1e-12):
    """Vector-norm relative error between tape gradients and FD derivatives.

    Per-coordinate ratios are meaningless where the derivative is tiny
    relative to the loss (the h=1e-6 difference quotient bottoms out at
    the 1e-16 * loss / h noise floor), so the comparison is the L2 error
    of the probed gradient vector relative to its norm.
    """
    ad = np.array([tensors[ti].grad.reshape(-1)[ci] for ti, ci, _ in fd_entries])
    fd = np.array([entry[2] for entry in fd_entries])
    return float(np.linalg.norm(ad - fd) / max(np.linalg.norm(fd), floor))


def jacobi_spectral_norm(W, sweeps=50, tol=1e-14):
    """Largest singular value via cyclic Jacobi diagonalization of W^T W."""
    A = np.asarray(W, dtype=np.float64)
    S = A.T @ A
    n = S.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(S[p, q]) < tol:
                    continue
                off = max(off, abs(S[p, q]))
                theta = 0.5 * np.arctan2(2.0 * S[p, q], S[q, q] - S[p, p])
                c, s = np.cos(theta), np.sin(theta)
                J = np.eye(n)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                S = J.T @ S @ J
        if off < tol:
            break
    return float(np.sqrt(max(np.max(np.diag(S)), 0.0)))


def direct_circular_conv(x, k, b):
    """Brute-force circular cross-correlation; x [C,H,W], k [O,C,kh,kw]."""
    C, H, W = x.shape
    O, _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros((O, H, W))
    for o in range(O):
        for i in range(H):
            for j in range(W):
                acc = b[o]
                for c in range(C):
                    for p in range(kh):
                        for q in range(kw):
                            acc += k[o, c, p, q] * x[c, (i + p - ph) % H, (j + q - pw) % W]
                y[o, i, j] = acc
    return y


def linear_closed_form(Q, lam, x0, times):
    """States of dx/dt = Q diag(lam) Q^T x at the given times."""
    Q = np.asarray(Q)
    lam = np.asarray(lam)
    x0 = np.asarray(x0)
    coeff = Q.T @ x0
    return np.stack([Q @ (np.exp(lam * t) * coeff) for t in times])
