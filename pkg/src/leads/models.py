"""Decomposed models: a shared component plus per-environment residuals.

Three architectures cover the experiment families: a 4-layer MLP for
low-dimensional ODE states, a 4-layer ConvNet with circular padding for
periodic fields, and a bias-free single matrix for the linear study.
Every environment's prediction is the sum shared(x) + residual_e(x); the
two parts always have identical parameter signatures.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from leads.autodiff import PowerIterState, Tensor, add, conv2d_circular, matmul, mlp4, reshape, swish
from leads.errors import ConfigError, ContractError, ShapeError

MLP_DEPTH = 4
CONV_DEPTH = 4


@dataclass
class ArchSpec:
    kind: str  # "mlp" | "conv" | "linear_map"
    in_dim: int = 0
    out_dim: int = 0
    hidden_width: int = 64
    channels: int = 16
    kernel_size: int = 3
    grid: int = 32

    @property
    def depth(self):
        return 1 if self.kind == "linear_map" else 4

    def validate(self):
        if self.kind not in ("mlp", "conv", "linear_map"):
            raise ConfigError(f"unknown architecture kind {self.kind!r}")
        if self.kind in ("mlp", "linear_map") and (self.in_dim < 1 or self.out_dim < 1):
            raise ConfigError("mlp/linear_map require in_dim and out_dim")

    def layer_shapes(self):
        """Shapes of the parameter tensors, in serialization order."""
        if self.kind == "mlp":
            w = self.hidden_width
            dims = [(self.in_dim, w), (w, w), (w, w), (w, self.out_dim)]
            shapes = []
            for fan_in, fan_out in dims:
                shapes.append((fan_out, fan_in))
                shapes.append((fan_out,))
            return shapes
        if self.kind == "conv":
            c, ks = self.channels, self.kernel_size
            chans = [(2, c), (c, c), (c, c), (c, 2)]
            shapes = []
            for cin, cout in chans:
                shapes.append((cout, cin, ks, ks))
                shapes.append((cout,))
            return shapes
        return [(self.out_dim, self.in_dim)]

    def param_count(self):
        return int(sum(np.prod(s) for s in self.layer_shapes()))

    def weight_matrices(self, params):
        """Weight tensors (biases excluded), reshaped to 2-D for spectral norms."""
        if self.kind == "linear_map":
            return [(params[0], params[0].data)]
        mats = []
        for i in range(0, len(params), 2):
            W = params[i]
            mats.append((W, W.data.reshape(W.data.shape[0], -1)))
        return mats


def init_params(arch, seed, scheme="standard"):
    """Fresh parameter tensors: uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    if scheme not in ("standard", "zero"):
        raise ConfigError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    params = []
    for shape in arch.layer_shapes():
        if scheme == "zero" or len(shape) == 1:
            data = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        params.append(Tensor(data, requires_grad=True))
    return params


def mlp_forward(params, x):
    """4 affine layers with swish after the first three."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim == 1:
        return reshape(mlp4(reshape(x, (1, -1)), params), (-1,))
    return mlp4(x, params)


def conv_forward(params, field):
    """4 circular conv layers (stride 1) with swish between them."""
    if len(params) != 8:
        raise ShapeError(f"conv_forward expects 8 parameter tensors, got {len(params)}")
    h = field if isinstance(field, Tensor) else Tensor(field)
    for layer in range(4):
        h = conv2d_circular(h, params[2 * layer], params[2 * layer + 1])
        if layer < 3:
            h = swish(h)
    return h


def linear_map_forward(params, x):
    """Single matrix, no bias, no activation. Row-vector convention."""
    W = params[0]
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim == 1:
        return reshape(matmul(reshape(x, (1, -1)), _transpose(W)), (-1,))
    return matmul(x, _transpose(W))


def _transpose(W):
    from leads.autodiff import record

    out = Tensor(W.data.T.copy())

    def bwd(gy):
        return (gy.T,)

    return record("transpose", out, (W,), bwd)


def apply_arch(arch, params, x):
    if arch.kind == "mlp":
        return mlp_forward(params, x)
    if arch.kind == "conv":
        return conv_forward(params, x)
    if arch.kind == "linear_map":
        return linear_map_forward(params, x)
    raise ConfigError(f"unknown architecture kind {arch.kind!r}")


class DecomposedModel:
    """Shared parameters plus one residual parameter set per environment.

    ``shared_residual=True`` marks the pooled-training variant whose single
    residual (stored under key "*") answers for every environment.
    ``shared_trainable=False`` freezes the shared part (zeroed for the
    per-environment baseline, pre-trained for novel-environment schemes).
    """

    SHARED_KEY = "*"

    def __init__(self, arch, f_params, g_params, shared_residual=False,
                 shared_trainable=True, meta=None):
        self.arch = arch
        self.f_params = f_params
        self.g_params = dict(g_params)
        self.shared_residual = shared_residual
        self.shared_trainable = shared_trainable
        self.meta = dict(meta or {})
        self.power_states = {}
        for env_id, params in self.g_params.items():
            self._init_power_state(env_id, params)

    def _init_power_state(self, env_id, params):
        rng = np.random.default_rng([zlib.crc32(env_id.encode()), 0x9E])
        self.power_states[env_id] = [
            PowerIterState(mat2d.shape[0], rng)
            for _, mat2d in self.arch.weight_matrices(params)
        ]

    @classmethod
    def build(cls, arch, env_ids, seed, g_init="standard", shared_residual=False,
              shared_trainable=True, f_init="standard", meta=None):
        arch.validate()
        f_params = init_params(arch, [seed, 0], scheme=f_init)
        if not shared_trainable:
            for p in f_params:
                p.requires_grad = False
        keys = [cls.SHARED_KEY] if shared_residual else list(env_ids)
        # Residual seeds key on the environment id, so per-environment
        # training is invariant to how environments are grouped or ordered.
        g_params = {
            env_id: init_params(arch, [seed, 1, zlib.crc32(env_id.encode())],
                                scheme=g_init)
            for env_id in keys
        }
        return cls(arch, f_params, g_params, shared_residual=shared_residual,
                   shared_trainable=shared_trainable, meta=meta)

    def residual_key(self, env_id):
        if self.shared_residual:
            return self.SHARED_KEY
        if env_id not in self.g_params:
            raise KeyError(f"environment {env_id!r} is not registered in this model")
        return env_id

    def env_params(self, env_id):
        return self.g_params[self.residual_key(env_id)]

    def covers(self, env_id):
        return self.shared_residual or env_id in self.g_params

    def register_env(self, env_id, seed, g_init="standard"):
        if self.shared_residual:
            raise ContractError("cannot register environments on a pooled model")
        params = init_params(self.arch, [seed, zlib.crc32(env_id.encode())], scheme=g_init)
        self.g_params[env_id] = params
        self._init_power_state(env_id, params)
        return params

    def trainable_params(self, env_ids=None):
        params = [p for p in self.f_params if p.requires_grad]
        keys = self.g_params if env_ids is None else {self.residual_key(e) for e in env_ids}
        for key in keys:
            params.extend(p for p in self.g_params[key] if p.requires_grad)
        return params

    def param_count(self):
        tensors = list(self.f_params)
        for params in self.g_params.values():
            tensors.extend(params)
        return int(sum(p.data.size for p in tensors))


def decomposed_forward(model, env_id, x):
    """shared(x) + residual_e(x), both recorded on the active tape."""
    g = model.env_params(env_id)
    fx = apply_arch(model.arch, model.f_params, x)
    gx = apply_arch(model.arch, g, x)
    return add(fx, gx)
