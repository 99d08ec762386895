import numpy as np
import pytest

from leads.errors import ConfigError
from leads.systems import (
    GS_DU,
    GS_DV,
    GS_SEED_EPS,
    GS_THETA,
    LV_THETA,
    EnvSpec,
    generate_dataset,
    gs_derivative,
    linear_derivative,
    lv_derivative,
    periodic_laplacian,
    sample_env,
    sample_envs,
    sample_initial,
    shared_orthogonal,
)
from leads.integrators import step_fixed

from oracles import linear_closed_form


def lv_spec(alpha=1.0, beta=1.0, gamma=1.0, delta=1.0):
    return EnvSpec("lv", {"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta}, "e")


def gs_spec(F=0.037, k=0.060, grid=4):
    return EnvSpec("gs", {"F": F, "k": k, "Du": GS_DU, "Dv": GS_DV, "grid": grid}, "e")


# ---------------------------------------------------------------------------
# derivatives


def test_lv_extinction_and_interior_fixed_points():
    spec = lv_spec(alpha=1.5, beta=1.0, gamma=2.0, delta=1.0)
    assert np.array_equal(lv_derivative(np.zeros(2), spec), np.zeros(2))
    interior = np.array([2.0 / 1.0, 1.5 / 1.0])  # (gamma/delta, alpha/beta)
    assert np.allclose(lv_derivative(interior, spec), 0.0, atol=1e-14)


def test_lv_direct_formula():
    spec = lv_spec()
    assert np.array_equal(lv_derivative(np.array([1.0, 1.0]), spec), [0.0, 0.0])
    assert np.array_equal(lv_derivative(np.array([2.0, 1.0]), spec), [0.0, 1.0])


def test_gs_trivial_steady_state():
    spec = gs_spec()
    state = np.stack([np.ones((4, 4)), np.zeros((4, 4))]).reshape(-1)
    assert np.allclose(gs_derivative(state, spec), 0.0, atol=1e-15)


def test_gs_constant_fields():
    a, b = 0.4, 0.7
    spec = gs_spec()
    state = np.stack([np.full((4, 4), a), np.full((4, 4), b)]).reshape(-1)
    d = gs_derivative(state, spec).reshape(2, 4, 4)
    assert np.allclose(d[0], -a * b * b + spec.params["F"] * (1 - a), atol=1e-14)
    assert np.allclose(d[1], a * b * b - (spec.params["F"] + spec.params["k"]) * b, atol=1e-14)


def test_gs_stencil_impulse_matches_bruteforce():
    z = np.zeros((4, 4))
    z[1, 2] = 1.0
    lap = periodic_laplacian(z)
    want = np.zeros((4, 4))
    want[1, 2] = -4.0
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        want[(1 + di) % 4, (2 + dj) % 4] += 1.0
    assert np.array_equal(lap, want)


def test_linear_eigendirections():
    lam = np.full(8, -0.5)
    lam[3] = 0.0
    spec = EnvSpec("linear", {"Q": np.eye(8), "Lambda": lam}, "e")
    e3 = np.eye(8)[3]
    assert np.allclose(linear_derivative(e3, spec), 0.0, atol=1e-15)
    e5 = np.eye(8)[5]
    assert np.allclose(linear_derivative(e5, spec), -0.5 * e5, atol=1e-15)


def test_linear_random_orthogonal_eigenvector():
    Q = shared_orthogonal(42)
    assert np.abs(Q @ Q.T - np.eye(8)).max() < 1e-10
    lam = np.full(8, -0.5)
    lam[2] = 0.0
    spec = EnvSpec("linear", {"Q": Q, "Lambda": lam}, "e")
    x = Q[:, 2]
    assert np.abs(linear_derivative(x, spec)).max() < 1e-12


# ---------------------------------------------------------------------------
# sampling


def test_sample_env_domains():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = sample_env("lv", rng)
        theta = (spec.params["alpha"] / spec.params["beta"],
                 spec.params["gamma"] / spec.params["delta"])
        assert theta in LV_THETA
    for _ in range(10):
        spec = sample_env("gs", rng)
        assert (spec.params["F"], spec.params["k"]) in GS_THETA
        assert spec.params["Du"] == GS_DU and spec.params["Dv"] == GS_DV
    for _ in range(10):
        spec = sample_env("linear", rng)
        lam = np.asarray(spec.params["Lambda"])
        assert np.sum(lam == 0.0) == 1
        assert np.sum(lam == -0.5) == 7


def test_sample_envs_distinct_and_block_disjoint():
    train = sample_envs("lv", 8, seed=5)
    thetas = {(s.params["alpha"], s.params["gamma"]) for s in train}
    assert len(thetas) == 8
    novel = sample_envs("lv", 4, seed=5 + 10**6)
    novel_thetas = {(s.params["alpha"], s.params["gamma"]) for s in novel}
    assert thetas.isdisjoint(novel_thetas)
    # linear family shares one orthogonal basis across blocks
    lin_train = sample_envs("linear", 4, seed=3)
    lin_novel = sample_envs("linear", 2, seed=3 + 10**6)
    assert np.array_equal(lin_train[0].params["Q"], lin_novel[0].params["Q"])
    zeros_train = {int(np.argmax(s.params["Lambda"])) for s in lin_train}
    zeros_novel = {int(np.argmax(s.params["Lambda"])) for s in lin_novel}
    assert zeros_train.isdisjoint(zeros_novel)


def test_sample_envs_exhaustion_error():
    with pytest.raises(ConfigError):
        sample_envs("gs", 4, seed=0)


def test_sample_initial_lv_in_unit_box():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x0 = sample_initial("lv", rng)
        assert np.all(x0 >= 1.0) and np.all(x0 <= 2.0)


def test_sample_initial_gs_seed_squares():
    rng = np.random.default_rng(2)
    x0 = sample_initial("gs", rng, grid=16).reshape(2, 16, 16)
    u, v = x0
    inside = u == 1.0 - GS_SEED_EPS
    outside = ~inside
    assert 4 <= inside.sum() <= 12  # overlapping squares allowed
    assert np.all(u[outside] == 0.0)
    assert np.all(v[inside] == GS_SEED_EPS)
    assert np.all(v[outside] == 1.0)


def test_sample_initial_linear_zero_stub():
    class ZeroRng:
        def standard_normal(self, n):
            return np.zeros(n)

    assert np.array_equal(sample_initial("linear", ZeroRng()), np.zeros(8))


# ---------------------------------------------------------------------------
# dataset generation


def test_generate_linear_matches_closed_form():
    data = generate_dataset("linear", 2, 3, K=10, dt=0.2, seed=7)
    for spec, trajs in data.envs:
        for traj in trajs:
            times = 0.2 * np.arange(11)
            want = linear_closed_form(spec.params["Q"], spec.params["Lambda"],
                                      traj.x0, times)
            assert np.abs(traj.states - want).max() < 1e-6


def test_generate_lv_fixed_point_constant():
    # alpha=beta=gamma=delta=1 sits in the universe at theta=(1,1), env built directly
    spec = lv_spec()
    from leads.systems import _integrate_truth, derivative_fn

    states = _integrate_truth(derivative_fn(spec), np.array([1.0, 1.0]), 20, 0.5, "dopri5")
    assert np.abs(states - 1.0).max() < 1e-9


def test_generate_dopri5_matches_rk4_fine():
    d1 = generate_dataset("lv", 2, 1, K=20, dt=0.5, seed=1, solver="dopri5")
    d2 = generate_dataset("lv", 2, 1, K=20, dt=0.5, seed=1, solver="rk4-fine")
    for (_, t1), (_, t2) in zip(d1.envs, d2.envs):
        assert np.abs(t1[0].states - t2[0].states).max() < 1e-5


def test_shared_initial_conditions_bit_identical():
    data = generate_dataset("lv", 4, 3, K=5, dt=0.5, seed=9)
    base = [t.x0 for t in data.envs[0][1]]
    for _, trajs in data.envs[1:]:
        for i, t in enumerate(trajs):
            assert np.array_equal(t.x0, base[i])
            assert np.array_equal(t.states[0], t.x0)


def test_lv_positivity():
    data = generate_dataset("lv", 6, 2, K=20, dt=0.5, seed=11)
    for _, trajs in data.envs:
        for t in trajs:
            assert np.all(t.states > 0.0)


def test_gs_diffusion_only_conserves_mean():
    spec = gs_spec(F=0.0, k=0.0, grid=8)
    rng = np.random.default_rng(3)
    u = rng.random((8, 8))
    v = np.zeros((8, 8))  # no reaction: u*v^2 = 0 everywhere
    state = np.stack([u, v]).reshape(-1)
    deriv = lambda s: gs_derivative(s, spec)
    means = [state.reshape(2, -1)[0].mean()]
    for _ in range(20):
        state = step_fixed(deriv, state, 0.1, method="rk4")
        means.append(state.reshape(2, -1)[0].mean())
    assert np.abs(np.diff(means)).max() < 1e-10


def test_dataset_reproducibility():
    a = generate_dataset("gs", 2, 1, K=2, dt=10.0, seed=4, grid=8)
    b = generate_dataset("gs", 2, 1, K=2, dt=10.0, seed=4, grid=8)
    for (sa, ta), (sb, tb) in zip(a.envs, b.envs):
        assert sa.params == sb.params
        assert np.array_equal(ta[0].states, tb[0].states)


def test_ic_seed_reuses_envs_with_fresh_states():
    a = generate_dataset("lv", 3, 2, K=3, dt=0.5, seed=6)
    b = generate_dataset("lv", 3, 2, K=3, dt=0.5, seed=6, ic_seed=6 + 10**9)
    assert [s.params for s, _ in a.envs] == [s.params for s, _ in b.envs]
    assert not np.array_equal(a.envs[0][1][0].x0, b.envs[0][1][0].x0)
