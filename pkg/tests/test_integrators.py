import numpy as np
import pytest

from leads.autodiff import Tape, Tensor, add, mlp4, sqnorm, sub
from leads.errors import ContractError, DivergenceError
from leads.integrators import SolverConfig, integrate_adaptive, rollout, step_fixed
from leads.systems import EnvSpec, lv_derivative, shared_orthogonal

from oracles import finite_difference_grads, linear_closed_form, max_rel_error


def test_zero_derivative_keeps_state():
    x = np.array([1.0, -2.0])
    for method in ("euler", "rk4"):
        assert np.array_equal(step_fixed(lambda s: 0.0 * s, x, 0.3, method), x)


def test_rk4_matches_truncated_taylor_on_decay():
    got = step_fixed(lambda s: -s, np.array([1.0]), 0.1, "rk4")[0]
    want = 1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24
    assert abs(got - want) < 1e-15
    assert abs(got - 0.9048375) < 1e-7


def _global_error(method, h, deriv, x0, T, ref):
    x = x0.copy()
    n = int(round(T / h))
    for _ in range(n):
        x = step_fixed(deriv, x, h, method)
    return np.abs(x - ref).max()


def test_order_ratios_on_exponential_decay():
    deriv = lambda s: -s
    x0 = np.array([1.0])
    ref = x0 * np.exp(-2.0)
    for method, lo, hi in (("euler", 1.0, 3.0), ("rk4", 8.0, 24.0)):
        e1 = _global_error(method, 0.1, deriv, x0, 2.0, ref)
        e2 = _global_error(method, 0.05, deriv, x0, 2.0, ref)
        ratio = e1 / e2
        assert lo <= ratio <= hi, (method, ratio)


def test_rk4_richardson_on_lv():
    spec = EnvSpec("lv", {"alpha": 1.0, "beta": 1.0, "gamma": 1.0, "delta": 1.0}, "e")
    deriv = lambda s: lv_derivative(s, spec)
    x0 = np.array([1.5, 1.5])
    h = 0.05
    ref = x0.copy()
    for _ in range(int(10 / (h / 64))):
        ref = step_fixed(deriv, ref, h / 64, "rk4")
    e1 = _global_error("rk4", h, deriv, x0, 10.0, ref)
    e2 = _global_error("rk4", h / 2, deriv, x0, 10.0, ref)
    assert 10.0 <= e1 / e2 <= 24.0


def test_adaptive_constant_derivative():
    out = integrate_adaptive(lambda s: np.zeros_like(s), np.array([2.0, 3.0]),
                             [0.5, 1.0, 2.0])
    assert np.allclose(out, [[2.0, 3.0]] * 3, atol=1e-14)


def test_adaptive_matches_linear_closed_form():
    Q = shared_orthogonal(1)
    lam = np.full(8, -0.5)
    lam[4] = 0.0
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(8)
    deriv = lambda s: (s @ Q) * lam @ Q.T
    times = 0.5 * np.arange(1, 21)
    cfg = SolverConfig(rtol=1e-7, atol=1e-9, h_init=0.05)
    got = integrate_adaptive(deriv, x0, times, cfg)
    want = linear_closed_form(Q, lam, x0, times)
    assert np.abs(got - want).max() < 1e-6


def test_adaptive_matches_fine_rk4_on_lv():
    spec = EnvSpec("lv", {"alpha": 1.0, "beta": 1.0, "gamma": 1.0, "delta": 1.0}, "e")
    deriv = lambda s: lv_derivative(s, spec)
    x0 = np.array([1.5, 1.5])
    times = np.linspace(0.5, 10.0, 20)
    got = integrate_adaptive(deriv, x0, times, SolverConfig(h_init=0.05))
    x = x0.copy()
    h = 1e-4
    want = []
    t = 0.0
    for target in times:
        n = int(round((target - t) / h))
        for _ in range(n):
            x = step_fixed(deriv, x, h, "rk4")
        t = target
        want.append(x.copy())
    assert np.abs(got - np.array(want)).max() < 1e-5


def test_adaptive_tolerance_scaling():
    Q = shared_orthogonal(3)
    lam = np.full(8, -0.5)
    lam[0] = 0.0
    x0 = np.random.default_rng(4).standard_normal(8)
    deriv = lambda s: (s @ Q) * lam @ Q.T
    times = np.linspace(1.0, 10.0, 10)
    want = linear_closed_form(Q, lam, x0, times)
    errs = []
    for rtol in (1e-4, 1e-5):
        got = integrate_adaptive(deriv, x0, times,
                                 SolverConfig(rtol=rtol, atol=1e-12, h_init=0.5))
        errs.append(np.abs(got - want).max())
    assert errs[0] / errs[1] >= 3.0


def test_adaptive_requires_increasing_times():
    with pytest.raises(ContractError):
        integrate_adaptive(lambda s: -s, np.array([1.0]), [1.0, 0.5])
    with pytest.raises(ContractError):
        integrate_adaptive(lambda s: -s, np.array([1.0]), [0.0, 0.5])


def test_adaptive_divergence_reports():
    deriv = lambda s: s * s * 100.0  # finite-time blowup
    with pytest.raises(DivergenceError):
        integrate_adaptive(deriv, np.array([5.0]), [10.0],
                           SolverConfig(max_steps=2000))


def test_rollout_zero_model_keeps_state():
    x0 = Tensor(np.array([[1.0, 2.0]]))
    preds = rollout(lambda s: 0.0 * s, x0, K=4, dt=0.5)
    for p in preds:
        assert np.array_equal(p.data, x0.data)


def test_rollout_single_step_equals_step_fixed():
    rng = np.random.default_rng(5)
    W = rng.standard_normal((2, 2)) * 0.4

    deriv = lambda s: s @ W.T
    x0 = rng.standard_normal((1, 2))
    got = rollout(deriv, x0, K=1, dt=0.3)[0]
    want = step_fixed(deriv, x0, 0.3, "rk4")
    assert np.allclose(got, want, atol=1e-15)


def test_rollout_gradient_matches_fd():
    rng = np.random.default_rng(6)
    dims = [(2, 8), (8, 8), (8, 8), (8, 2)]
    params = []
    for fi, fo in dims:
        params.append(Tensor(0.5 * rng.standard_normal((fo, fi)), requires_grad=True))
        params.append(Tensor(0.5 * rng.standard_normal(fo), requires_grad=True))
    truth = rng.standard_normal((3, 1, 2))
    x0 = Tensor(rng.uniform(1, 2, (1, 2)))

    def compute():
        preds = rollout(lambda s: mlp4(s, params), x0, K=3, dt=0.2)
        loss = None
        for k, p in enumerate(preds):
            term = sqnorm(sub(p, Tensor(truth[k])))
            loss = term if loss is None else add(loss, term)
        return loss

    with Tape() as tape:
        loss = compute()
    tape.backward(loss)
    fd = finite_difference_grads(lambda: compute().item(), params, coords=5,
                                 rng=np.random.default_rng(7))
    assert max_rel_error(fd, params) < 1e-5


def test_rollout_determinism():
    rng = np.random.default_rng(8)
    dims = [(2, 8), (8, 8), (8, 8), (8, 2)]
    params = []
    for fi, fo in dims:
        params.append(Tensor(0.5 * rng.standard_normal((fo, fi)), requires_grad=True))
        params.append(Tensor(0.5 * rng.standard_normal(fo), requires_grad=True))
    x0 = Tensor(np.array([[1.1, 1.9]]))

    def run():
        with Tape() as tape:
            preds = rollout(lambda s: mlp4(s, params), x0, K=4, dt=0.25)
            loss = sqnorm(preds[-1])
        tape.backward(loss)
        grads = [p.grad.copy() for p in params]
        for p in params:
            p.zero_grad()
        return loss.item(), grads

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2 and all(np.array_equal(a, b) for a, b in zip(g1, g2))


def test_rollout_divergence_names_step():
    blow = lambda s: s * (s * 1e4)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError, match="step"):
            rollout(blow, Tensor(np.array([[10.0, 10.0]])), K=5, dt=1.0)
