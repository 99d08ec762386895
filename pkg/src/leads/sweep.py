"""Environment-count sweep: disjoint grouping protocol over a fixed test set.

A pool of M environments is arranged into b disjoint, equal-size,
consecutive groups (m = M/b environments each). Every method is
instantiated independently per group, each group's model is scored on
that group's slice of the global test set, and the cell value is the
mean over all groups — so every (b, n, method, seed) cell is scored on
the identical global test set. Cells run in parallel processes; the
``LEADS_THREADS`` environment variable caps the worker count.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from leads.errors import ConfigError
from leads.training import Metrics, default_config, evaluate, train

TEST_IC_OFFSET = 10**9  # keys the held-out initial-condition stream


@dataclass
class SweepSpec:
    system: str = "lv"
    total_envs: int = 8
    group_counts: list = field(default_factory=lambda: [1, 2, 4, 8])
    traj_per_env: list = field(default_factory=lambda: [1])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    K: int = 20
    dt: float = 0.5
    test_traj: int = 8
    methods: list = field(default_factory=lambda: ["leads", "one-for-all", "one-per-env"])
    grid: int = 32
    config: dict = field(default_factory=dict)

    def validate(self):
        if self.total_envs < 1:
            raise ConfigError("sweep: total_envs must be >= 1")
        for b in self.group_counts:
            if b < 1 or self.total_envs % b != 0:
                raise ConfigError(
                    f"sweep: group count {b} does not divide {self.total_envs} environments"
                )
        return self

    def to_dict(self):
        return {
            "system": self.system,
            "total_envs": self.total_envs,
            "group_counts": list(self.group_counts),
            "traj_per_env": list(self.traj_per_env),
            "seeds": list(self.seeds),
            "K": self.K,
            "dt": self.dt,
            "test_traj": self.test_traj,
            "methods": list(self.methods),
            "grid": self.grid,
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"sweep: unknown fields {sorted(unknown)}")
        return cls(**d).validate()


def _arch_for(dataset, grid):
    from leads.models import ArchSpec
    from leads.systems import LINEAR_DIM

    if dataset.system == "lv":
        return ArchSpec(kind="mlp", in_dim=2, out_dim=2)
    if dataset.system == "gs":
        return ArchSpec(kind="conv", grid=grid)
    return ArchSpec(kind="linear_map", in_dim=LINEAR_DIM, out_dim=LINEAR_DIM)


def _cell_name(b, n_traj, method, seed):
    return f"cell_b{b}_n{n_traj}_{method}_s{seed}"


def run_cell(train_path, test_path, b, n_traj, method, seed, grid, config, out_csv):
    """Train one sweep cell and score it on the global test set.

    Returns (b, m, n_traj, method, seed, mean test MSE over all groups).
    """
    from leads.io import load_dataset, save_metrics

    train_data = load_dataset(train_path)
    test_data = load_dataset(test_path)
    M = len(train_data.envs)
    m = M // b
    arch = _arch_for(train_data, grid)
    cfg = default_config(train_data.system, method=method, seed=seed, **config)

    cell_metrics = Metrics()
    per_env = []
    for gi in range(b):
        idx = list(range(gi * m, (gi + 1) * m))
        model, _ = train(train_data.subset(idx), arch, cfg)
        ev = evaluate(model, test_data.subset(idx), method_name=method)
        cell_metrics.extend(ev)
        per_env.extend(
            r["mse"] for r in ev.select(split="test", epoch=-1)
            if not r["env_id"].startswith("aggregate")
        )
    score = float(np.mean(per_env))
    if out_csv is not None:
        save_metrics(out_csv, cell_metrics)
    return (b, m, n_traj, method, seed, score)


def _run_cell_star(args):
    return run_cell(*args)


def max_workers():
    env = os.environ.get("LEADS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(spec, out_dir, parallel=True):
    """Run every sweep cell; writes per-cell CSVs plus aggregate.csv.

    Datasets are generated once per (seed, n) pair; the test set of a seed
    reuses the training environments with a held-out initial-condition
    stream, so every cell of that seed scores the same test trajectories.
    """
    from leads.io import load_dataset, save_dataset
    from leads.systems import generate_dataset

    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    data_dir = os.path.join(out_dir, "datasets")
    os.makedirs(data_dir, exist_ok=True)

    train_paths = {}
    test_paths = {}
    for seed in spec.seeds:
        test_path = os.path.join(data_dir, f"test_s{seed}.json")
        if not os.path.exists(test_path):
            test = generate_dataset(spec.system, spec.total_envs, spec.test_traj,
                                    spec.K, spec.dt, seed, grid=spec.grid,
                                    ic_seed=seed + TEST_IC_OFFSET)
            save_dataset(test_path, test)
        test_paths[seed] = test_path
        for n_traj in spec.traj_per_env:
            train_path = os.path.join(data_dir, f"train_s{seed}_n{n_traj}.json")
            if not os.path.exists(train_path):
                data = generate_dataset(spec.system, spec.total_envs, n_traj,
                                        spec.K, spec.dt, seed, grid=spec.grid)
                save_dataset(train_path, data)
            train_paths[(seed, n_traj)] = train_path

    jobs = []
    for seed in spec.seeds:
        for n_traj in spec.traj_per_env:
            for b in spec.group_counts:
                for method in spec.methods:
                    out_csv = os.path.join(out_dir, _cell_name(b, n_traj, method, seed) + ".csv")
                    jobs.append((train_paths[(seed, n_traj)], test_paths[seed],
                                 b, n_traj, method, seed, spec.grid, spec.config, out_csv))

    if parallel and max_workers() > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers()) as pool:
            rows = list(pool.map(_run_cell_star, jobs))
    else:
        rows = [_run_cell_star(j) for j in jobs]

    rows.sort(key=lambda r: (r[0], r[2], r[3], r[4]))
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w") as fh:
        fh.write("b,m,n_traj,method,seed,mse_test\n")
        for b, m, n_traj, method, seed, score in rows:
            fh.write(f"{b},{m},{n_traj},{method},{seed},{score:.17g}\n")
    return rows
