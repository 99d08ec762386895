"""Training procedures for the decomposed dynamics models.

The relaxed objective per environment is

    sum_i sum_k || x_(k+1) - x~_(k+1) ||^2  +  (1/lambda) * Omega(g_e)

summed over environments, where x~ rolls the learned evolution term
forward from a scheduled-sampling start (ground truth with probability
p = ss_exponent**epoch, previous prediction otherwise) and Omega is the
normalized empirical output norm plus alpha times the summed squared
spectral norms of the residual's weight matrices. The shared component
receives gradients from every environment, each residual only from its
own.

Methods: ``leads`` (full objective), ``leads-no-min`` (no penalty),
``one-for-all`` (single pooled residual), ``one-per-env`` (independent
per-environment fits, shared part frozen at zero), and ``gbml`` (pooled
pre-training, then per-environment fine-tuning of residual copies).
"""

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from leads.autodiff import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    add,
    mul,
    reshape,
    rk4_mlp_step,
    scale,
    spectral_norm,
    sqnorm,
    sub,
    zero_grads,
)
from leads.autodiff.fused import (apply_propagator, linear_propagator,
                                  scheduled_restart, squared_error, sum_scalars)
from leads.errors import ConfigError, ContractError, DivergenceError
from leads.integrators import step_fixed
from leads.models import ArchSpec, DecomposedModel, apply_arch, decomposed_forward
from leads.systems import Dataset

METHODS = ("leads", "one-for-all", "one-per-env", "leads-no-min", "gbml")
ADAPT_SCHEMES = ("f-only", "from-scratch", "f-plus-g")

GBML_FINETUNE_FRACTION = 0.25
RATIO_GUARD = 1e-8  # states with norm below this use a plain output norm


@dataclass
class TrainConfig:
    method: str = "leads"
    lambda_: float = 5e3
    alpha: float = 1e-3
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    epochs: int = 20000
    ss_exponent: float = 0.99
    integrator: str = "rk4"
    seed: int = 0
    g_init: str = "standard"

    # JSON field names; "lambda" is a Python keyword, hence the trailing
    # underscore on the attribute.
    FIELDS = ("method", "lambda", "alpha", "lr", "betas", "epochs",
              "ss_exponent", "integrator", "seed", "g_init")

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method == "leads":
            if not self.lambda_ > 0:
                raise ConfigError("leads requires lambda > 0")
            if self.alpha < 0:
                raise ConfigError("leads requires alpha >= 0")
        if not (0.0 < self.ss_exponent <= 1.0):
            raise ConfigError("ss_exponent must lie in (0, 1]")
        if self.integrator not in ("rk4", "euler"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        return self

    def to_dict(self):
        return {
            "method": self.method,
            "lambda": self.lambda_,
            "alpha": self.alpha,
            "lr": self.lr,
            "betas": list(self.betas),
            "epochs": self.epochs,
            "ss_exponent": self.ss_exponent,
            "integrator": self.integrator,
            "seed": self.seed,
            "g_init": self.g_init,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.FIELDS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            kw["lambda_"] = float(kw.pop("lambda"))
        if "betas" in kw:
            kw["betas"] = tuple(kw["betas"])
        return cls(**kw).validate()


def default_config(system, method="leads", **overrides):
    """Per-system defaults; the penalty weights follow the reported choices."""
    base = {
        "lv": dict(lambda_=5e3, alpha=1e-3, epochs=20000),
        "gs": dict(lambda_=1e2, alpha=1e-2, epochs=5000),
        "linear": dict(lambda_=1e3, alpha=0.0, epochs=5000),
    }
    if system not in base:
        raise ConfigError(f"unknown system {system!r}")
    kw = base[system]
    kw.update(overrides)
    return TrainConfig(method=method, **kw).validate()


@dataclass
class Metrics:
    """Flat per-epoch / final rows matching the metrics CSV schema."""

    rows: list = field(default_factory=list)

    def append(self, method, system, env_id, split, epoch, mse, penalty=float("nan")):
        self.rows.append(
            {"method": method, "system": system, "env_id": env_id, "split": split,
             "epoch": int(epoch), "mse": float(mse), "penalty": float(penalty)}
        )

    def extend(self, other):
        self.rows.extend(other.rows)

    def select(self, **criteria):
        out = [r for r in self.rows
               if all(r[k] == v for k, v in criteria.items())]
        return out

    def final_test_mse(self, env_id=None):
        rows = self.select(split="test", epoch=-1)
        if env_id is not None:
            rows = [r for r in rows if r["env_id"] == env_id]
        else:
            rows = [r for r in rows if not r["env_id"].startswith("aggregate")]
        if not rows:
            raise ContractError("no final test rows recorded")
        return float(np.mean([r["mse"] for r in rows]))

    def test_series(self, env_id):
        rows = [r for r in self.rows
                if r["split"] == "test" and r["env_id"] == env_id and r["epoch"] >= 0]
        return [(r["epoch"], r["mse"]) for r in rows]


# ---------------------------------------------------------------------------
# rollout machinery


def _is_frozen_zero(params):
    return all((not p.requires_grad) and not np.any(p.data) for p in params)


def _active_param_sets(model, env_id):
    sets = []
    if not _is_frozen_zero(model.f_params):
        sets.append(model.f_params)
    g = model.env_params(env_id)
    if not _is_frozen_zero(g):
        sets.append(g)
    return sets


def _generic_deriv(model, env_id):
    sets = _active_param_sets(model, env_id)
    arch = model.arch
    if not sets:
        return lambda x: scale(x, 0.0)
    if len(sets) == 1:
        only = sets[0]
        return lambda x: apply_arch(arch, only, x)
    a, b = sets
    return lambda x: add(apply_arch(arch, a, x), apply_arch(arch, b, x))


def make_stepper(model, env_id, dt, method="rk4", substeps=1):
    """Build a callable advancing a state batch by one observation interval.

    DecomposedModel instances with MLP or linear-map architectures take the
    fused single-node path under RK4; everything else (ConvNets, Euler,
    substepping, plain callables used as ground-truth wrappers) goes through
    the generic per-op route.
    """
    if callable(model) and not isinstance(model, DecomposedModel):
        deriv = lambda x: Tensor(model(x.data)) if isinstance(x, Tensor) else model(x)

        def step(s):
            x = s
            for _ in range(substeps):
                x = step_fixed(deriv, x, dt / substeps, method=method)
            return x

        return step

    arch = model.arch
    if method == "rk4" and substeps == 1 and arch.kind in ("mlp", "linear_map"):
        sets = _active_param_sets(model, env_id)
        if not sets:
            return lambda s: s
        if arch.kind == "mlp":
            return lambda s: rk4_mlp_step(s, dt, sets)
        # The linear propagator is step-independent: build it once on the
        # tape active right now and reuse it for every step of the rollout.
        phi = linear_propagator([params[0] for params in sets], dt)
        return lambda s: apply_propagator(s, phi)

    deriv = _generic_deriv(model, env_id)

    def step(s):
        x = s
        for _ in range(substeps):
            x = step_fixed(deriv, x, dt / substeps, method=method)
        return x

    return step


def _mix_start(pred, truth_k, coins_k):
    """Scheduled-sampling start: ground truth where the coin came up true."""
    if coins_k.all():
        return Tensor(truth_k)
    if not coins_k.any():
        return pred
    return scheduled_restart(pred, truth_k, ~coins_k)


def _rollout_sq_loss(stepper, truth, coins):
    """Summed squared error of a scheduled-sampling rollout.

    ``truth`` is [B, K+1, ...]; ``coins`` is a bool [B, K] matrix, or None
    for free running. Returns the scalar loss tensor: the sum over
    trajectories, steps and state entries. Non-finite states surface
    through the loss value checked by the caller.
    """
    K = truth.shape[1] - 1
    pred = Tensor(truth[:, 0])
    terms = []
    for k in range(K):
        if k == 0 or coins is None:
            start = pred if k > 0 else Tensor(truth[:, 0])
        else:
            start = _mix_start(pred, truth[:, k], coins[:, k])
        pred = stepper(start)
        terms.append(squared_error(pred, truth[:, k + 1]))
    return sum_scalars(terms)


def _truth_array(model_arch, trajs):
    states = np.stack([t.states for t in trajs])  # [B, K+1, dim]
    if model_arch is not None and model_arch.kind == "conv":
        B, Kp1 = states.shape[:2]
        N = model_arch.grid
        states = states.reshape(B, Kp1, 2, N, N)
    return states


def trajectory_loss(model, env_id, traj, teacher_prob, rng=None, method="rk4", substeps=1):
    """Mean squared rollout error of one trajectory under scheduled sampling.

    Each step restarts from the observed state with probability
    ``teacher_prob`` (drawn from ``rng``) and from the running prediction
    otherwise; the result is the mean over steps and state entries.
    """
    if not (0.0 <= teacher_prob <= 1.0):
        raise ContractError("teacher_prob must lie in [0, 1]")
    arch = model.arch if isinstance(model, DecomposedModel) else None
    truth = _truth_array(arch, [traj])
    K = truth.shape[1] - 1
    if teacher_prob == 0.0:
        coins = None
    elif teacher_prob == 1.0:
        coins = np.ones((1, K), dtype=bool)
    else:
        if rng is None:
            raise ContractError("teacher_prob in (0, 1) requires an rng")
        coins = rng.random((1, K)) < teacher_prob
    stepper = make_stepper(model, env_id, traj.dt, method=method, substeps=substeps)
    total = _rollout_sq_loss(stepper, truth, coins)
    return scale(total, 1.0 / (K * traj.x0.size))


# ---------------------------------------------------------------------------
# penalty


def penalty_norm_term(model, env_id, batch_states, p=2):
    """Empirical L^p estimate of the residual's normalized output norm.

    Computes mean_i (||g_e(x_i)|| / ||x_i||)^p without recording on any
    tape; ``p=2`` equals the norm term used inside omega_penalty.
    """
    X = np.asarray(batch_states, dtype=np.float64)
    g = model.env_params(env_id)
    arch = model.arch
    inp = X.reshape(X.shape[0], 2, arch.grid, arch.grid) if arch.kind == "conv" else X
    out = apply_arch(arch, g, Tensor(inp)).data.reshape(X.shape[0], -1)
    gn = np.linalg.norm(out, axis=1)
    xn = np.linalg.norm(X, axis=1)
    ratios = np.where(xn < RATIO_GUARD, gn, gn / np.maximum(xn, RATIO_GUARD))
    return float(np.mean(ratios**p))


def omega_penalty(model, env_id, batch_states, alpha, power_iters=1, form=None):
    """Capacity penalty of one environment residual, on the tape.

    The default form for networks is the normalized empirical output norm
    (1/n) sum ||g_e(x)||^2 / ||x||^2 plus alpha times the sum of squared
    spectral norms of the weight matrices; states with vanishing norm fall
    back to the plain output norm. Linear-map models use the squared
    Frobenius norm of the residual matrix instead.
    """
    arch = model.arch
    if form is None:
        form = "frobenius" if arch.kind == "linear_map" else "ratio"
    g = model.env_params(env_id)
    if form == "frobenius":
        return sqnorm(g[0])
    if form != "ratio":
        raise ConfigError(f"unknown penalty form {form!r}")

    X = np.asarray(batch_states, dtype=np.float64)
    n = X.shape[0]
    norms2 = (X * X).sum(axis=tuple(range(1, X.ndim)))
    weights = np.where(norms2 < RATIO_GUARD**2, 1.0, 1.0 / np.maximum(norms2, RATIO_GUARD**2))
    weights = weights / n
    inp = X.reshape(n, 2, arch.grid, arch.grid) if arch.kind == "conv" else X
    gx = apply_arch(arch, g, Tensor(inp))
    if gx.data.ndim > 2:
        gx = reshape(gx, (n, -1))
    w = np.sqrt(weights).reshape(n, 1)
    term = sqnorm(mul(gx, Tensor(np.broadcast_to(w, gx.data.shape).copy())))

    if alpha > 0:
        states = model.power_states[model.residual_key(env_id)]
        mats = arch.weight_matrices(g)
        spec = None
        for (W, mat2d), pstate in zip(mats, states):
            W2d = W if mat2d.shape == W.data.shape else reshape(W, mat2d.shape)
            s = spectral_norm(W2d, pstate, iters=power_iters)
            s2 = mul(s, s)
            spec = s2 if spec is None else add(spec, s2)
        term = add(term, scale(spec, alpha))
    return term


# ---------------------------------------------------------------------------
# training loops


def _env_truths(dataset, arch):
    return {spec.env_id: _truth_array(arch, trajs) for spec, trajs in dataset.envs}


def _flat_states(truth):
    return truth.reshape(truth.shape[0] * truth.shape[1], -1)


def _build_model(dataset, arch, cfg):
    env_ids = dataset.env_ids
    meta = {"seed": cfg.seed, "method": cfg.method}
    if cfg.method in ("one-for-all", "gbml"):
        # gbml starts from the pooled fit and is split per env afterwards
        return DecomposedModel.build(arch, env_ids, cfg.seed, g_init=cfg.g_init,
                                     shared_residual=True, meta=meta)
    if cfg.method == "one-per-env":
        # Independent per-environment fits: the shared part is pinned at the
        # trivial decomposition point (zero function).
        return DecomposedModel.build(arch, env_ids, cfg.seed, g_init="standard",
                                     f_init="zero", shared_trainable=False, meta=meta)
    return DecomposedModel.build(arch, env_ids, cfg.seed, g_init=cfg.g_init, meta=meta)


def _train_phase(model, dataset, cfg, epochs, metrics, with_penalty,
                 test_dataset=None, eval_every=0, substeps=1, epoch_offset=0,
                 log_every=1):
    arch = model.arch
    truths = _env_truths(dataset, arch)
    flat = {e: _flat_states(t) for e, t in truths.items()}
    env_ids = dataset.env_ids
    params = model.trainable_params(env_ids)
    if not params:
        raise ContractError("no trainable parameters for this configuration")
    adam = AdamState.for_params(params, lr=cfg.lr, betas=cfg.betas)
    # One stream per environment (keyed by id): scheduled-sampling draws are
    # then independent of environment order and grouping.
    coin_rngs = {e: np.random.default_rng([cfg.seed, 0xC0, zlib.crc32(e.encode())])
                 for e in env_ids}
    inv_lambda = 0.0 if math.isinf(cfg.lambda_) else 1.0 / cfg.lambda_

    for epoch in range(epochs):
        p = cfg.ss_exponent ** (epoch + epoch_offset)
        per_env = {}
        with Tape() as tape:
            total = None
            for env_id in env_ids:
                truth = truths[env_id]
                B, Kp1 = truth.shape[:2]
                coins = coin_rngs[env_id].random((B, Kp1 - 1)) < p
                stepper = make_stepper(model, env_id, dataset.dt,
                                       cfg.integrator, substeps)
                loss = _rollout_sq_loss(stepper, truth, coins)
                obj = loss
                pen_value = float("nan")
                if with_penalty:
                    pen = omega_penalty(model, env_id, flat[env_id], cfg.alpha)
                    pen_value = pen.item()
                    if inv_lambda:
                        obj = add(obj, scale(pen, inv_lambda))
                per_env[env_id] = (loss.item(), pen_value)
                total = obj if total is None else add(total, obj)
            if not np.isfinite(total.item()):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            zero_grads(params)
            tape.backward(total)
        adam_step(params, adam)

        if metrics is not None and (epoch % log_every == 0 or epoch == epochs - 1):
            for env_id in env_ids:
                loss_sum, pen_value = per_env[env_id]
                denom = truths[env_id][:, 1:].size
                metrics.append(cfg.method, dataset.system, env_id, "train",
                               epoch + epoch_offset, loss_sum / denom, pen_value)
        if test_dataset is not None and eval_every and (
                epoch % eval_every == 0 or epoch == epochs - 1):
            _log_test(model, test_dataset, cfg, metrics, epoch + epoch_offset,
                      substeps=substeps)
    return model


def _log_test(model, test_dataset, cfg, metrics, epoch, substeps=1):
    for spec, _ in test_dataset.envs:
        if not model.covers(spec.env_id):
            continue
        mse = _env_test_mse(model, test_dataset, spec.env_id, cfg.integrator, substeps)
        metrics.append(cfg.method, test_dataset.system, spec.env_id, "test", epoch, mse)


def _env_test_mse(model, dataset, env_id, method="rk4", substeps=1):
    trajs = dict((spec.env_id, ts) for spec, ts in dataset.envs)[env_id]
    arch = model.arch if isinstance(model, DecomposedModel) else None
    truth = _truth_array(arch, trajs)
    stepper = make_stepper(model, env_id, dataset.dt, method=method, substeps=substeps)
    x = Tensor(truth[:, 0])
    sq = 0.0
    K = truth.shape[1] - 1
    for k in range(K):
        x = stepper(x)
        d = x.data - truth[:, k + 1]
        sq += float((d * d).sum())
    return sq / truth[:, 1:].size


def train(dataset, arch, cfg, test_dataset=None, eval_every=0, substeps=1, log_every=1):
    """Train one method on a dataset; returns (model, metrics).

    The shared component receives gradients from every environment at each
    full-batch step; residuals only from their own environment. Scheduled
    sampling decays the teacher probability as ss_exponent**epoch. The run
    is deterministic given (seed, cfg, dataset).
    """
    cfg.validate()
    if not dataset.envs:
        raise ContractError("train: dataset has no environments")
    arch.validate()
    metrics = Metrics()
    model = _build_model(dataset, arch, cfg)

    if cfg.method == "gbml":
        pooled = dataset.merged(DecomposedModel.SHARED_KEY)
        _train_phase(model, pooled, cfg, cfg.epochs, metrics, with_penalty=False,
                     substeps=substeps, log_every=log_every)
        model = _split_pooled(model, dataset, cfg)
        fine = max(1, int(GBML_FINETUNE_FRACTION * cfg.epochs))
        _train_phase(model, dataset, cfg, fine, metrics, with_penalty=False,
                     test_dataset=test_dataset, eval_every=eval_every,
                     substeps=substeps, epoch_offset=cfg.epochs, log_every=log_every)
    else:
        train_data = dataset.merged(DecomposedModel.SHARED_KEY) \
            if cfg.method == "one-for-all" else dataset
        with_penalty = cfg.method == "leads"
        _train_phase(model, train_data, cfg, cfg.epochs, metrics,
                     with_penalty=with_penalty, test_dataset=test_dataset,
                     eval_every=eval_every, substeps=substeps, log_every=log_every)

    if test_dataset is not None:
        ev = evaluate(model, test_dataset, method_name=cfg.method,
                      integrator=cfg.integrator, substeps=substeps)
        metrics.extend(ev)
    return model, metrics


def _split_pooled(model, dataset, cfg):
    """Turn a pooled model into per-environment residual copies, frozen shared."""
    arch = model.arch
    for p in model.f_params:
        p.requires_grad = False
    shared_g = model.g_params[DecomposedModel.SHARED_KEY]
    g_params = {}
    for spec, _ in dataset.envs:
        g_params[spec.env_id] = [Tensor(p.data.copy(), requires_grad=True)
                                 for p in shared_g]
    return DecomposedModel(arch, model.f_params, g_params,
                           shared_trainable=False, meta=model.meta)


def adapt_novel(pretrained, novel_dataset, cfg, scheme, test_dataset=None,
                eval_every=50, substeps=1, log_every=1, arch=None):
    """Fit novel environments with a pre-trained shared component.

    ``f-only`` evaluates the shared component as-is (sanity check),
    ``from-scratch`` ignores the pre-training and fits each novel
    environment independently, ``f-plus-g`` freezes the shared component
    and trains a fresh residual per novel environment under the penalty.
    """
    if scheme not in ADAPT_SCHEMES:
        raise ConfigError(f"unknown adaptation scheme {scheme!r}")
    cfg.validate()
    metrics = Metrics()
    env_ids = novel_dataset.env_ids
    meta = {"seed": cfg.seed, "method": f"adapt-{scheme}"}

    if scheme in ("f-only", "f-plus-g"):
        if not isinstance(pretrained, DecomposedModel):
            raise ContractError(f"scheme {scheme!r} requires a pre-trained model")
        arch = pretrained.arch
        frozen_f = [Tensor(p.data.copy(), requires_grad=False)
                    for p in pretrained.f_params]
        if scheme == "f-only":
            g_params = {e: [Tensor(np.zeros_like(p.data)) for p in frozen_f]
                        for e in env_ids}
            model = DecomposedModel(arch, frozen_f, g_params,
                                    shared_trainable=False, meta=meta)
            if test_dataset is not None:
                cfg_named = replace(cfg, method=meta["method"])
                _log_test(model, test_dataset, cfg_named, metrics, 0, substeps)
                ev = evaluate(model, test_dataset, method_name=meta["method"],
                              integrator=cfg.integrator, substeps=substeps)
                metrics.extend(ev)
            return model, metrics
        model = DecomposedModel(arch, frozen_f, {}, shared_trainable=False, meta=meta)
        for env_id in env_ids:
            model.register_env(env_id, cfg.seed, g_init=cfg.g_init)
        with_penalty = True
    else:
        if arch is None:
            if not isinstance(pretrained, DecomposedModel):
                raise ContractError("from-scratch adaptation needs an architecture source")
            arch = pretrained.arch
        model = DecomposedModel.build(arch, env_ids, cfg.seed, g_init="standard",
                                      f_init="zero", shared_trainable=False, meta=meta)
        with_penalty = False

    cfg_named = replace(cfg, method=meta["method"])
    _train_phase(model, novel_dataset, cfg_named, cfg.epochs, metrics,
                 with_penalty=with_penalty, test_dataset=test_dataset,
                 eval_every=eval_every, substeps=substeps, log_every=log_every)
    if test_dataset is not None:
        ev = evaluate(model, test_dataset, method_name=meta["method"],
                      integrator=cfg.integrator, substeps=substeps)
        metrics.extend(ev)
    return model, metrics


def evaluate(model, dataset, method_name=None, integrator="rk4", substeps=1):
    """Free-running test error per environment plus the aggregate summary.

    Rollouts start from each held-out trajectory's initial state with no
    teacher forcing; the MSE averages over trajectories, steps and state
    entries. Rows carry epoch -1; the aggregate rows report the mean and
    the sample standard deviation across environments.
    """
    if isinstance(model, DecomposedModel):
        for spec, _ in dataset.envs:
            if not model.covers(spec.env_id):
                raise KeyError(f"environment {spec.env_id!r} is not registered in this model")
        name = method_name or model.meta.get("method", "eval")
        lookup = None
    elif isinstance(model, dict):
        for spec, _ in dataset.envs:
            if spec.env_id not in model:
                raise KeyError(f"environment {spec.env_id!r} is not covered by the model map")
        name = method_name or "oracle"
        lookup = model
    else:
        raise ContractError("evaluate expects a DecomposedModel or a dict of derivatives")

    metrics = Metrics()
    per_env = []
    for spec, _ in dataset.envs:
        target = lookup[spec.env_id] if lookup is not None else model
        mse = _env_test_mse(target, dataset, spec.env_id, integrator, substeps)
        metrics.append(name, dataset.system, spec.env_id, "test", -1, mse)
        per_env.append(mse)
    mean = float(np.mean(per_env))
    std = float(np.std(per_env, ddof=1)) if len(per_env) > 1 else 0.0
    metrics.append(name, dataset.system, "aggregate_mean", "test", -1, mean)
    metrics.append(name, dataset.system, "aggregate_std", "test", -1, std)
    return metrics
