"""Dataset, model, config, and metrics file I/O.

All structured artifacts are JSON with floats printed at 17 significant
digits, which round-trips float64 exactly; the emitter below produces a
canonical byte stream (fixed key order, no whitespace variation) so that
serialize -> parse -> serialize is byte-identical. Parsing uses the
standard library.
"""

import json

import numpy as np

from leads.errors import ConfigError
from leads.models import ArchSpec, DecomposedModel
from leads.systems import Dataset, EnvSpec, Trajectory
from leads.training import Metrics, TrainConfig

METRICS_HEADER = "method,system,env_id,split,epoch,mse,penalty"


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if x != x:
            return "NaN"
        if x == float("inf"):
            return "Infinity"
        if x == float("-inf"):
            return "-Infinity"
        return f"{x:.17g}"
    if isinstance(value, str):
        return json.dumps(value)
    if value is None:
        return "null"
    raise ConfigError(f"cannot serialize value of type {type(value)!r}")


def dumps(obj):
    """Canonical JSON text: insertion-ordered keys, 17-digit floats."""
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(k)}:{dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    return _fmt(obj)


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# datasets


_PARAM_KEYS = {
    "lv": ("alpha", "beta", "gamma", "delta"),
    "gs": ("F", "k", "Du", "Dv", "grid"),
    "linear": ("Q", "Lambda"),
}


def dataset_to_obj(dataset):
    envs = []
    for spec, trajs in dataset.envs:
        params = {}
        for key in _PARAM_KEYS[dataset.system]:
            value = spec.params[key]
            params[key] = value.tolist() if isinstance(value, np.ndarray) else value
        envs.append({
            "env_id": spec.env_id,
            "params": params,
            "trajectories": [
                {"x0": t.x0.tolist(), "states": t.states.tolist()} for t in trajs
            ],
        })
    return {
        "system": dataset.system,
        "dt": float(dataset.dt),
        "K": int(dataset.K),
        "seed": int(dataset.seed),
        "envs": envs,
    }


def save_dataset(path, dataset):
    write_json(path, dataset_to_obj(dataset))


def dataset_from_obj(obj):
    system = obj["system"]
    if system not in _PARAM_KEYS:
        raise ConfigError(f"unknown system {system!r} in dataset file")
    dt = float(obj["dt"])
    envs = []
    for env in obj["envs"]:
        params = dict(env["params"])
        if system == "linear":
            params["Q"] = np.asarray(params["Q"], dtype=np.float64)
            params["Lambda"] = np.asarray(params["Lambda"], dtype=np.float64)
        elif system == "gs":
            params["grid"] = int(params["grid"])
        spec = EnvSpec(system=system, params=params, env_id=env["env_id"])
        trajs = [
            Trajectory(
                env_id=spec.env_id,
                x0=np.asarray(t["x0"], dtype=np.float64),
                states=np.asarray(t["states"], dtype=np.float64),
                dt=dt,
            )
            for t in env["trajectories"]
        ]
        envs.append((spec, trajs))
    return Dataset(system=system, dt=dt, K=int(obj["K"]), seed=int(obj["seed"]), envs=envs)


def load_dataset(path):
    return dataset_from_obj(read_json(path))


# ---------------------------------------------------------------------------
# models


_ARCH_KEYS = ("kind", "in_dim", "out_dim", "hidden_width", "channels",
              "kernel_size", "grid", "depth")


def model_to_obj(model):
    arch = model.arch
    arch_obj = {
        "kind": arch.kind,
        "in_dim": arch.in_dim,
        "out_dim": arch.out_dim,
        "hidden_width": arch.hidden_width,
        "channels": arch.channels,
        "kernel_size": arch.kernel_size,
        "grid": arch.grid,
        "depth": arch.depth,
    }
    return {
        "arch": arch_obj,
        "f": [p.data.reshape(-1).tolist() for p in model.f_params],
        "g": {
            env_id: [p.data.reshape(-1).tolist() for p in params]
            for env_id, params in model.g_params.items()
        },
        "meta": dict(model.meta),
    }


def save_model(path, model):
    write_json(path, model_to_obj(model))


def model_from_obj(obj):
    from leads.autodiff import Tensor

    arch_obj = obj["arch"]
    unknown = set(arch_obj) - set(_ARCH_KEYS)
    if unknown:
        raise ConfigError(f"unknown arch fields: {sorted(unknown)}")
    arch = ArchSpec(
        kind=arch_obj["kind"],
        in_dim=int(arch_obj.get("in_dim", 0)),
        out_dim=int(arch_obj.get("out_dim", 0)),
        hidden_width=int(arch_obj.get("hidden_width", 64)),
        channels=int(arch_obj.get("channels", 16)),
        kernel_size=int(arch_obj.get("kernel_size", 3)),
        grid=int(arch_obj.get("grid", 32)),
    )
    arch.validate()
    shapes = arch.layer_shapes()

    def unflatten(flat_lists, trainable):
        if len(flat_lists) != len(shapes):
            raise ConfigError(
                f"model file holds {len(flat_lists)} tensors, arch needs {len(shapes)}"
            )
        return [
            Tensor(np.asarray(flat, dtype=np.float64).reshape(shape),
                   requires_grad=trainable)
            for flat, shape in zip(flat_lists, shapes)
        ]

    meta = dict(obj.get("meta", {}))
    method = meta.get("method", "")
    shared_residual = list(obj["g"].keys()) == [DecomposedModel.SHARED_KEY]
    shared_trainable = not (
        method in ("one-per-env", "gbml") or method.startswith("adapt-")
    )
    f_params = unflatten(obj["f"], trainable=shared_trainable)
    if not shared_trainable:
        for p in f_params:
            p.requires_grad = False
    g_params = {
        env_id: unflatten(flats, trainable=True) for env_id, flats in obj["g"].items()
    }
    return DecomposedModel(arch, f_params, g_params, shared_residual=shared_residual,
                           shared_trainable=shared_trainable, meta=meta)


def load_model(path):
    return model_from_obj(read_json(path))


# ---------------------------------------------------------------------------
# configs and metrics


def save_config(path, cfg):
    write_json(path, cfg.to_dict())


def load_config(path):
    return TrainConfig.from_dict(read_json(path))


def metrics_to_csv(metrics):
    lines = [METRICS_HEADER]
    for r in metrics.rows:
        lines.append(
            f"{r['method']},{r['system']},{r['env_id']},{r['split']},"
            f"{r['epoch']},{_fmt(float(r['mse']))},{_fmt(float(r['penalty']))}"
        )
    return "\n".join(lines) + "\n"


def save_metrics(path, metrics):
    with open(path, "w") as fh:
        fh.write(metrics_to_csv(metrics))


def load_metrics(path):
    metrics = Metrics()
    with open(path) as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ConfigError(f"unexpected metrics header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            method, system, env_id, split, epoch, mse, penalty = line.split(",")
            metrics.append(method, system, env_id, split, int(epoch),
                           float(mse), float(penalty))
    return metrics
