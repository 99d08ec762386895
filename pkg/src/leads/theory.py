"""Closed-form theory calculators for the linear and fixed-architecture cases.

These compute the quantities that admit explicit formulas: the optimal
shared/residual split of a family of linear maps, covering-number bounds
for bounded linear maps, the resulting generalization-error bound, the
capacity bound for fixed feed-forward architectures, and the trajectory
energy kappa that caps the penalty of any objective minimizer.
"""

import math
from dataclasses import dataclass

import numpy as np

from leads.errors import ContractError


@dataclass
class BoundInputs:
    """Everything the bound formulas consume.

    r and r_prime bound the squared Frobenius norms of the residual and
    shared maps (or the penalty values in the network variant); b bounds
    input norms, c the squared-error loss, d is the state dimension, m the
    environment count, n the per-environment sample count, delta the
    confidence, z the scale split in (0, 1).
    """

    r: float = 1.0
    r_prime: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: int = 8
    m: int = 1
    n: int = 40
    delta: float = 0.05
    z: float = 0.5
    epsilon: float = 1.0
    W: int = 0
    D: int = 4
    R: float = 1.0
    L: float = 1.0
    alpha: float = 1e-3

    def validate(self):
        if not (0.0 < self.z < 1.0):
            raise ContractError("BoundInputs: z must lie in (0, 1)")
        if not (0.0 < self.delta < 1.0):
            raise ContractError("BoundInputs: delta must lie in (0, 1)")
        for name in ("r", "r_prime", "b", "c"):
            if getattr(self, name) < 0:
                raise ContractError(f"BoundInputs: {name} must be non-negative")
        if self.d < 1 or self.m < 1 or self.n < 1:
            raise ContractError("BoundInputs: d, m, n must be positive")
        return self


def linear_optimum(F_list):
    """Optimal decomposition of linear maps: shared mean, zero-sum residuals.

    Returns (F_star, [G_e]) with F_star the elementwise mean of the inputs
    and G_e = F_e - F_star, which minimizes the summed squared Frobenius
    norms of the residuals subject to exact reconstruction.
    """
    mats = [np.asarray(F, dtype=np.float64) for F in F_list]
    if not mats:
        raise ContractError("linear_optimum: empty matrix list")
    d = mats[0].shape
    if len(d) != 2 or d[0] != d[1] or any(M.shape != d for M in mats):
        raise ContractError("linear_optimum: matrices must share a square shape")
    F_star = np.mean(mats, axis=0)
    return F_star, [M - F_star for M in mats]


def linear_capacity_bound(r, c, d, b, epsilon):
    """Covering-number bound for linear maps with ||G||_F^2 <= r.

    log-capacity <= ceil(r c d (2b)^2 / eps^2) * log(2 d^2). Non-decreasing
    in r everywhere, strictly increasing across ceiling boundaries.
    """
    if epsilon <= 0:
        raise ContractError("linear_capacity_bound: epsilon must be positive")
    if min(r, c, b) < 0 or d < 1:
        raise ContractError("linear_capacity_bound: inputs must be positive")
    cells = math.ceil(r * c * d * (2.0 * b) ** 2 / epsilon**2)
    if r * c * b > 0 and cells == 0:
        cells = 1  # ceiling of a vanishing positive quantity
    return cells * math.log(2.0 * d * d)


def linear_generalization_bound(inp):
    """Generalization error of the decomposed linear learner.

    epsilon = max(sqrt((p + sqrt(p^2 + 4 q)) / 2), sqrt(16 / n)) with
    p = (64 / (m n)) log(4 / delta) and
    q = (64 / n) ceil((r' / (m z^2) + r / (1 - z)^2) c d (32 b)^2) log(2 d^2).
    """
    inp.validate()
    m, n, z, d = inp.m, inp.n, inp.z, inp.d
    p = 64.0 / (m * n) * math.log(4.0 / inp.delta)
    inner = (inp.r_prime / (m * z**2) + inp.r / (1.0 - z) ** 2) * inp.c * d * (32.0 * inp.b) ** 2
    q = 64.0 / n * math.ceil(inner) * math.log(2.0 * d * d)
    eps_capacity = math.sqrt((p + math.sqrt(p * p + 4.0 * q)) / 2.0)
    return max(eps_capacity, math.sqrt(16.0 / n))


def nn_capacity_bound(W, D, c, epsilon, R=None, L=None, r=None, alpha=None):
    """Capacity bound for a fixed feed-forward architecture.

    With output bound R and Lipschitz bound L:
        omega = 2 W log(R L / eps) + 2 W log(8 e sqrt(c) D).
    With a penalty bound r and weight alpha (variant):
        omega = 2 W log(r / (eps sqrt(alpha))) + 2 W log(8 e sqrt(c) D).
    """
    if epsilon <= 0:
        raise ContractError("nn_capacity_bound: epsilon must be positive")
    if W < 1 or D < 1 or c <= 0:
        raise ContractError("nn_capacity_bound: W, D, c must be positive")
    c1 = 2.0 * W
    c2 = 2.0 * W * math.log(8.0 * math.e * math.sqrt(c) * D)
    if r is not None:
        if alpha is None or alpha <= 0 or r <= 0:
            raise ContractError("nn_capacity_bound: variant needs positive r and alpha")
        return c1 * math.log(r / (epsilon * math.sqrt(alpha))) + c2
    if R is None or L is None or R * L <= 0:
        raise ContractError("nn_capacity_bound: needs positive R and L")
    return c1 * math.log(R * L / epsilon) + c2


def kappa(dataset):
    """Total squared-derivative energy of the dataset's trajectories.

    Estimates sum_e sum_i integral ||dx/dt||^2 dt by finite differences:
    central in the interior, one-sided at the endpoints, summed times dt.
    """
    total = 0.0
    for _, trajs in dataset.envs:
        for traj in trajs:
            states = traj.states
            K = states.shape[0] - 1
            if K < 2:
                raise ContractError("kappa requires trajectories with K >= 2")
            dt = traj.dt
            deriv = np.empty_like(states)
            deriv[0] = (states[1] - states[0]) / dt
            deriv[-1] = (states[-1] - states[-2]) / dt
            deriv[1:-1] = (states[2:] - states[:-2]) / (2.0 * dt)
            total += float((deriv * deriv).sum()) * dt
    return total


def appendix_linear_family(m, seed=0):
    """The m-environment linear construction used in the bound experiments.

    Environments share one orthogonal basis; environment e zeroes its e-th
    eigenvalue while the rest sit at -0.5. Returns the list of F_e.
    """
    from leads.systems import LINEAR_DIM, LINEAR_EIGENVALUE, shared_orthogonal

    if not (1 <= m <= LINEAR_DIM):
        raise ContractError(f"appendix_linear_family: m must lie in [1, {LINEAR_DIM}]")
    Q = shared_orthogonal(seed)
    mats = []
    for e in range(m):
        lam = np.full(LINEAR_DIM, LINEAR_EIGENVALUE)
        lam[e] = 0.0
        mats.append((Q * lam) @ Q.T)
    return mats


def bound_curve(m_values, n_values, delta=0.05, z=0.5, c=1.0, b=1.0, seed=0):
    """Generalization-bound table for the appendix linear construction.

    For each group size m the penalized branch bounds the residuals around
    the group mean (r = max ||F_e - F_bar||_F^2, r' = ||F_bar||_F^2); the
    unpenalized branch leaves everything in the residuals (shared map 0).
    Returns rows (m, n, epsilon_with_penalty, epsilon_no_penalty).
    """
    rows = []
    for m in m_values:
        mats = appendix_linear_family(m, seed=seed)
        F_star, residuals = linear_optimum(mats)
        r_pen = max(float((G * G).sum()) for G in residuals)
        rp_pen = float((F_star * F_star).sum())
        r_nopen = max(float((F * F).sum()) for F in mats)
        d = mats[0].shape[0]
        for n in n_values:
            pen = linear_generalization_bound(BoundInputs(
                r=r_pen, r_prime=rp_pen, b=b, c=c, d=d, m=m, n=n, delta=delta, z=z))
            nopen = linear_generalization_bound(BoundInputs(
                r=r_nopen, r_prime=0.0, b=b, c=c, d=d, m=m, n=n, delta=delta, z=z))
            rows.append((m, n, pen, nopen))
    return rows
