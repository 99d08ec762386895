"""Ground-truth environment dynamics and dataset generation.

Three system families are supported:

* ``lv`` — Lotka-Volterra predator-prey ODE, state (u, v).
* ``gs`` — Gray-Scott reaction-diffusion PDE on a periodic N x N grid,
  state a flattened [2, N, N] field (u block then v block, row-major).
* ``linear`` — d-dimensional linear ODE dx/dt = Q diag(Lambda) Q^T x with
  a shared orthogonal Q and per-environment eigenvalues.

Environment parameters are drawn without replacement from the finite
parameter universe of each family, through a permutation keyed by the
base seed (``seed mod 1e6``). Seeds offset by multiples of 1e6 address
later blocks of the same permutation, so novel-environment datasets are
guaranteed parameter-disjoint from the training dataset they offset.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from leads.errors import ConfigError, ContractError, GenerationError
from leads.integrators import SolverConfig, integrate_adaptive, step_fixed

SEED_BLOCK = 10**6

LV_THETA = tuple(itertools.product((0.5, 1.0, 1.44, 1.5, 1.86, 2.0), repeat=2))
GS_THETA = ((0.037, 0.060), (0.030, 0.062), (0.039, 0.058))
GS_DU = 0.2097
GS_DV = 0.105
GS_SEED_EPS = 0.05
LINEAR_DIM = 8
LINEAR_EIGENVALUE = -0.5


@dataclass
class EnvSpec:
    """Ground-truth dynamics parameters for one environment."""

    system: str
    params: dict
    env_id: str


@dataclass
class Trajectory:
    env_id: str
    x0: np.ndarray
    states: np.ndarray  # [K+1, state_dim], states[0] == x0
    dt: float


@dataclass
class Dataset:
    system: str
    dt: float
    K: int
    seed: int
    envs: list = field(default_factory=list)  # [(EnvSpec, [Trajectory, ...]), ...]

    @property
    def env_ids(self):
        return [spec.env_id for spec, _ in self.envs]

    def state_dim(self):
        return self.envs[0][1][0].x0.size

    def subset(self, env_indices):
        """New Dataset restricted to the given environment indices."""
        return Dataset(
            system=self.system,
            dt=self.dt,
            K=self.K,
            seed=self.seed,
            envs=[self.envs[i] for i in env_indices],
        )

    def merged(self, env_id):
        """Pool every trajectory under a single environment id."""
        spec = EnvSpec(system=self.system, params={}, env_id=env_id)
        trajs = [t for _, ts in self.envs for t in ts]
        return Dataset(self.system, self.dt, self.K, self.seed, [(spec, trajs)])


# ---------------------------------------------------------------------------
# evolution terms


def lv_derivative(state, spec):
    """du/dt = alpha*u - beta*u*v, dv/dt = delta*u*v - gamma*v."""
    p = spec.params
    u, v = state[..., 0], state[..., 1]
    du = p["alpha"] * u - p["beta"] * u * v
    dv = p["delta"] * u * v - p["gamma"] * v
    return np.stack([du, dv], axis=-1)


def periodic_laplacian(z):
    """5-point stencil with periodic wraparound, unit spatial step."""
    return (
        np.roll(z, 1, axis=-2)
        + np.roll(z, -1, axis=-2)
        + np.roll(z, 1, axis=-1)
        + np.roll(z, -1, axis=-1)
        - 4.0 * z
    )


def gs_derivative(state, spec):
    """Gray-Scott reaction-diffusion right-hand side on a flattened field."""
    N = spec.params["grid"]
    F, k = spec.params["F"], spec.params["k"]
    Du, Dv = spec.params["Du"], spec.params["Dv"]
    field_ = state.reshape(state.shape[:-1] + (2, N, N))
    u, v = field_[..., 0, :, :], field_[..., 1, :, :]
    uvv = u * v * v
    du = Du * periodic_laplacian(u) - uvv + F * (1.0 - u)
    dv = Dv * periodic_laplacian(v) + uvv - (F + k) * v
    return np.stack([du, dv], axis=-3).reshape(state.shape)


def linear_derivative(state, spec):
    """dx/dt = Q diag(Lambda) Q^T x."""
    Q = np.asarray(spec.params["Q"])
    lam = np.asarray(spec.params["Lambda"])
    return (state @ Q) * lam @ Q.T


def derivative_fn(spec):
    if spec.system == "lv":
        return lambda x: lv_derivative(x, spec)
    if spec.system == "gs":
        return lambda x: gs_derivative(x, spec)
    if spec.system == "linear":
        return lambda x: linear_derivative(x, spec)
    raise ConfigError(f"unknown system {spec.system!r}")


# ---------------------------------------------------------------------------
# environment and initial-condition sampling


def _theta_universe(system):
    if system == "lv":
        return len(LV_THETA)
    if system == "gs":
        return len(GS_THETA)
    if system == "linear":
        return LINEAR_DIM
    raise ConfigError(f"unknown system {system!r}")


def _build_env(system, index, env_id, grid, shared_q):
    if system == "lv":
        theta1, theta2 = LV_THETA[index]
        # The grid fixes the rate ratios (alpha/beta, gamma/delta); unit
        # beta and delta reconstruct concrete rates.
        params = {"alpha": theta1, "beta": 1.0, "gamma": theta2, "delta": 1.0}
    elif system == "gs":
        F, k = GS_THETA[index]
        params = {"F": F, "k": k, "Du": GS_DU, "Dv": GS_DV, "grid": grid}
    else:
        lam = np.full(LINEAR_DIM, LINEAR_EIGENVALUE)
        lam[index] = 0.0
        params = {"Q": shared_q, "Lambda": lam}
    return EnvSpec(system=system, params=params, env_id=env_id)


def shared_orthogonal(base_seed, d=LINEAR_DIM):
    """Orthogonal Q shared by every linear environment of one seed family."""
    rng = np.random.default_rng([base_seed, 0x51])
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))  # fix the sign convention for determinism
    return Q


def sample_env(system, rng, grid=32, shared_q=None):
    """Draw one environment with parameters uniform over the family grid."""
    index = int(rng.integers(_theta_universe(system)))
    if system == "linear" and shared_q is None:
        shared_q = shared_orthogonal(0)
    return _build_env(system, index, f"{system}-{index:03d}", grid, shared_q)


def sample_envs(system, m_envs, seed, grid=32):
    """Draw ``m_envs`` distinct environments for the given seed.

    The draw permutes the parameter universe with the base seed and takes
    a contiguous block selected by ``seed // 1e6``, so offsetting the seed
    by 1e6 yields environments disjoint from the base block.
    """
    universe = _theta_universe(system)
    base = seed % SEED_BLOCK
    block = seed // SEED_BLOCK
    stride = max(1, universe // 2)
    start = block * stride
    if start + m_envs > universe:
        raise ConfigError(
            f"{system}: cannot draw {m_envs} distinct environments at seed block "
            f"{block} (universe size {universe})"
        )
    perm = np.random.default_rng([base, 0x5E]).permutation(universe)
    shared_q = shared_orthogonal(base) if system == "linear" else None
    return [
        _build_env(system, int(perm[start + j]), f"{system}-e{block}{j:02d}", grid, shared_q)
        for j in range(m_envs)
    ]


def sample_initial(system, rng, grid=32, dim=LINEAR_DIM):
    """Draw one initial condition from the family's P0."""
    if system == "lv":
        return rng.uniform(1.0, 2.0, size=2)
    if system == "gs":
        u = np.zeros((grid, grid))
        v = np.ones((grid, grid))
        for _ in range(3):  # 2x2 seed squares at uniform positions, may overlap
            i = int(rng.integers(grid))
            j = int(rng.integers(grid))
            rows = np.array([i, (i + 1) % grid])
            cols = np.array([j, (j + 1) % grid])
            u[np.ix_(rows, cols)] = 1.0 - GS_SEED_EPS
            v[np.ix_(rows, cols)] = GS_SEED_EPS
        return np.stack([u, v]).reshape(-1)
    if system == "linear":
        return rng.standard_normal(dim)
    raise ConfigError(f"unknown system {system!r}")


# ---------------------------------------------------------------------------
# dataset generation


def _integrate_truth(deriv, x0, K, dt, solver):
    times = dt * np.arange(1, K + 1)
    if solver == "dopri5":
        cfg = SolverConfig(method="dopri5", rtol=1e-7, atol=1e-9, h_init=dt / 10.0)
        states = integrate_adaptive(deriv, x0, times, cfg)
    elif solver == "rk4-fine":
        sub = 1000
        h = dt / sub
        states = np.empty((K, x0.size))
        x = x0
        for k in range(K):
            for _ in range(sub):
                x = step_fixed(deriv, x, h, method="rk4")
            states[k] = x
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    return np.vstack([x0[None], states])


def generate_dataset(system, m_envs, n_traj, K, dt, seed, solver="dopri5",
                     grid=32, ic_seed=None):
    """Simulate ``n_traj`` trajectories in each of ``m_envs`` environments.

    Initial conditions are drawn once per trajectory index and shared
    bit-identically across environments; ``ic_seed`` (default: ``seed``)
    keys the initial-condition stream separately so that held-out test
    sets can reuse a training seed's environments with fresh states.
    """
    if m_envs < 1 or n_traj < 1 or K < 1:
        raise ContractError("generate_dataset: m_envs, n_traj, K must be >= 1")
    envs = sample_envs(system, m_envs, seed, grid=grid)
    ic_rng = np.random.default_rng([ic_seed if ic_seed is not None else seed, 0x1C])
    x0s = [sample_initial(system, ic_rng, grid=grid) for _ in range(n_traj)]
    out = []
    for spec in envs:
        deriv = derivative_fn(spec)
        trajs = []
        for i, x0 in enumerate(x0s):
            try:
                states = _integrate_truth(deriv, x0, K, dt, solver)
            except Exception as exc:
                raise GenerationError(
                    f"generation failed for env {spec.env_id}, trajectory {i}: {exc}"
                ) from exc
            if not np.all(np.isfinite(states)):
                raise GenerationError(
                    f"non-finite states for env {spec.env_id}, trajectory {i}"
                )
            trajs.append(Trajectory(env_id=spec.env_id, x0=x0.copy(), states=states, dt=dt))
        out.append((spec, trajs))
    return Dataset(system=system, dt=dt, K=K, seed=seed, envs=out)
