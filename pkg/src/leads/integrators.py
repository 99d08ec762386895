"""Fixed-step and adaptive integration of evolution terms.

``step_fixed`` and ``rollout`` are generic over the state type: they use
only ``+`` and scalar ``*``, so they advance plain numpy arrays as well
as tape tensors (making the learned-model path differentiable end to
end). ``integrate_adaptive`` implements the Dormand-Prince 5(4) embedded
pair with a quartic Hermite-type dense output and is used for ground
truth only.
"""

from dataclasses import dataclass

import numpy as np

from leads.errors import ContractError, DivergenceError

# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_ERR = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Dense-output weights for the degree-4 interpolating polynomial.
_DP_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)


@dataclass
class SolverConfig:
    method: str = "dopri5"
    rtol: float = 1e-7
    atol: float = 1e-9
    max_steps: int = 100000
    h_init: float = None

    def validate(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractError("SolverConfig: rtol and atol must be positive")
        if self.max_steps < 1:
            raise ContractError("SolverConfig: max_steps must be >= 1")


def step_fixed(deriv, x, h, method="rk4"):
    """Advance one step of forward Euler or classical RK4."""
    if h <= 0:
        raise ContractError("step_fixed: h must be positive")
    if method == "euler":
        return x + h * deriv(x)
    if method == "rk4":
        k1 = deriv(x)
        k2 = deriv(x + (h / 2.0) * k1)
        k3 = deriv(x + (h / 2.0) * k2)
        k4 = deriv(x + h * k3)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    raise ContractError(f"step_fixed: unknown method {method!r}")


def _dense_eval(x0, x1, f0, f1, k, h, theta):
    """Quartic Hermite-type interpolant on one accepted DOPRI5 step."""
    dx = x1 - x0
    r1 = x0
    r2 = dx
    r3 = h * f0 - dx
    r4 = dx - h * f1 - r3
    r5 = h * sum(d * ki for d, ki in zip(_DP_D, k))
    return r1 + theta * (r2 + (1 - theta) * (r3 + theta * (r4 + (1 - theta) * r5)))


def integrate_adaptive(deriv, x0, times, cfg=None):
    """Integrate from t=0, returning states at the requested output times.

    Step acceptance uses the embedded 4th-order error with per-component
    scale atol + rtol*|x|; the controller is the elementary
    h <- h * clamp(0.9 * err^(-1/5), 0.2, 5.0).
    """
    cfg = cfg if cfg is not None else SolverConfig()
    cfg.validate()
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ContractError("integrate_adaptive: times must be a non-empty 1-D array")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise ContractError("integrate_adaptive: times must be strictly increasing and > 0")

    x0 = np.asarray(x0, dtype=np.float64)
    t_end = float(times[-1])
    h = cfg.h_init if cfg.h_init is not None else t_end / 100.0
    h = min(h, t_end)
    out = np.empty((times.size, x0.size))
    next_out = 0

    t = 0.0
    x = x0
    f = deriv(x)
    for _ in range(cfg.max_steps):
        h = min(h, t_end - t)
        k = [f]
        for i in range(1, 7):
            xi = x + h * sum(a * kj for a, kj in zip(_DP_A[i], k))
            k.append(deriv(xi))
        x_new = x + h * sum(b * ki for b, ki in zip(_DP_B5, k))
        err_vec = h * sum(e * ki for e, ki in zip(_DP_ERR, k))
        scale = cfg.atol + cfg.rtol * np.abs(x)
        err = float(np.max(np.abs(err_vec) / scale))

        if err <= 1.0:
            t_new = t + h
            f_new = k[6]  # FSAL: last stage is deriv at (t+h, x_new)
            while next_out < times.size and times[next_out] <= t_new + 1e-14:
                theta = (times[next_out] - t) / h
                if theta >= 1.0 - 1e-14:
                    out[next_out] = x_new
                else:
                    out[next_out] = _dense_eval(x, x_new, f, f_new, k, h, theta)
                next_out += 1
            t, x, f = t_new, x_new, f_new
            if next_out == times.size:
                return out
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"integrate_adaptive: non-finite state at t={t}")

        factor = 0.9 * err ** (-0.2) if err > 0 else 5.0
        h = h * min(5.0, max(0.2, factor))
        if h < 1e-12 * t_end:
            raise DivergenceError(f"integrate_adaptive: step underflow at t={t}")
    raise DivergenceError("integrate_adaptive: max_steps exceeded")


def rollout(model, x0, K, dt, method="rk4", substeps=1):
    """K successive fixed steps of a (possibly taped) evolution term.

    Returns the list of predicted states at dt, 2*dt, ..., K*dt. When the
    model builds tape tensors the whole computation is recorded, so losses
    on the result differentiate through the solver internals.
    """
    if method not in ("euler", "rk4"):
        raise ContractError(f"rollout: method must be euler or rk4, got {method!r}")
    h = dt / substeps
    states = []
    x = x0
    for step in range(K):
        for _ in range(substeps):
            x = step_fixed(model, x, h, method=method)
        data = x.data if hasattr(x, "data") else x
        if not np.all(np.isfinite(data)):
            raise DivergenceError(f"rollout: non-finite state at step {step + 1}")
        states.append(x)
    return states
