"""Command-line entry point.

Subcommands: generate, train, adapt, eval, bound, sweep. Exit codes:
0 on success, 1 on contract/usage errors, 2 on I/O errors.
"""

import argparse
import json
import sys

import numpy as np

from leads.errors import ConfigError, ContractError, DivergenceError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ContractError(message)


def _build_parser():
    parser = _Parser(prog="leads", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a ground-truth dataset")
    g.add_argument("--system", required=True, choices=["lv", "gs", "linear"])
    g.add_argument("--envs", required=True, type=int)
    g.add_argument("--traj", required=True, type=int)
    g.add_argument("--k", required=True, type=int)
    g.add_argument("--dt", required=True, type=float)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--solver", default="dopri5", choices=["dopri5", "rk4-fine"])
    g.add_argument("--grid", type=int, default=32)
    g.add_argument("--ic-seed", type=int, default=None,
                   help="separate initial-condition stream (same environments)")

    t = sub.add_parser("train", help="train a method on a dataset")
    t.add_argument("--method", required=True,
                   choices=["leads", "one-for-all", "one-per-env", "leads-no-min", "gbml"])
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--metrics", required=True)
    t.add_argument("--test-data", default=None)
    t.add_argument("--log-every", type=int, default=1)

    a = sub.add_parser("adapt", help="fit novel environments from a pre-trained model")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--scheme", required=True,
                   choices=["f-only", "from-scratch", "f-plus-g"])
    a.add_argument("--metrics", required=True)
    a.add_argument("--config", default=None)
    a.add_argument("--test-data", default=None)
    a.add_argument("--out", default=None)
    a.add_argument("--eval-every", type=int, default=50)

    e = sub.add_parser("eval", help="score a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--metrics", required=True)

    b = sub.add_parser("bound", help="theoretical bound tables")
    b.add_argument("--case", required=True, choices=["linear", "nn"])
    b.add_argument("--params", default=None)
    b.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="environment-count sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--serial", action="store_true", help="disable process parallelism")
    return parser


def _default_arch(dataset):
    from leads.models import ArchSpec
    from leads.systems import LINEAR_DIM

    if dataset.system == "lv":
        return ArchSpec(kind="mlp", in_dim=2, out_dim=2)
    if dataset.system == "gs":
        grid = dataset.envs[0][0].params["grid"]
        return ArchSpec(kind="conv", grid=grid)
    return ArchSpec(kind="linear_map", in_dim=LINEAR_DIM, out_dim=LINEAR_DIM)


def _cmd_generate(args):
    from leads.io import save_dataset
    from leads.systems import generate_dataset

    data = generate_dataset(args.system, args.envs, args.traj, args.k, args.dt,
                            args.seed, solver=args.solver, grid=args.grid,
                            ic_seed=args.ic_seed)
    save_dataset(args.out, data)
    return 0


def _cmd_train(args):
    from leads import io
    from leads.training import train

    data = io.load_dataset(args.data)
    cfg = io.load_config(args.config)
    if cfg.method != args.method:
        cfg.method = args.method
        cfg.validate()
    test_data = io.load_dataset(args.test_data) if args.test_data else None
    model, metrics = train(data, _default_arch(data), cfg, test_dataset=test_data,
                           log_every=args.log_every)
    io.save_model(args.out, model)
    io.save_metrics(args.metrics, metrics)
    return 0


def _cmd_adapt(args):
    from leads import io
    from leads.training import adapt_novel, default_config

    model = io.load_model(args.model)
    data = io.load_dataset(args.data)
    cfg = io.load_config(args.config) if args.config else default_config(data.system)
    test_data = io.load_dataset(args.test_data) if args.test_data else None
    adapted, metrics = adapt_novel(model, data, cfg, args.scheme,
                                   test_dataset=test_data, eval_every=args.eval_every)
    if args.out:
        io.save_model(args.out, adapted)
    io.save_metrics(args.metrics, metrics)
    return 0


def _cmd_eval(args):
    from leads import io
    from leads.training import evaluate

    model = io.load_model(args.model)
    data = io.load_dataset(args.data)
    metrics = evaluate(model, data)
    io.save_metrics(args.metrics, metrics)
    return 0


def _cmd_bound(args):
    from leads.io import read_json
    from leads.theory import bound_curve, nn_capacity_bound

    params = read_json(args.params) if args.params else {}
    if args.case == "linear":
        rows = bound_curve(
            m_values=params.get("m_values", [1, 2, 4, 8]),
            n_values=params.get("n_values", [40, 80]),
            delta=params.get("delta", 0.05),
            z=params.get("z", 0.5),
            c=params.get("c", 1.0),
            b=params.get("b", 1.0),
            seed=params.get("seed", 0),
        )
        with open(args.out, "w") as fh:
            fh.write("m,n,epsilon_with_penalty,epsilon_no_penalty\n")
            for m, n, pen, nopen in rows:
                fh.write(f"{m},{n},{pen:.17g},{nopen:.17g}\n")
        return 0
    W = params.get("W", 8642)
    D = params.get("D", 4)
    c = params.get("c", 1.0)
    R = params.get("R", 1.0)
    L = params.get("L", 1.0)
    r = params.get("r", None)
    alpha = params.get("alpha", 1e-3)
    eps_values = params.get("epsilons", [0.01, 0.1, 1.0])
    with open(args.out, "w") as fh:
        fh.write("epsilon,omega_RL,omega_r\n")
        for eps in eps_values:
            omega_rl = nn_capacity_bound(W, D, c, eps, R=R, L=L)
            omega_r = (nn_capacity_bound(W, D, c, eps, r=r, alpha=alpha)
                       if r is not None else float("nan"))
            fh.write(f"{eps:.17g},{omega_rl:.17g},{omega_r:.17g}\n")
    return 0


def _cmd_sweep(args):
    from leads.io import read_json
    from leads.sweep import SweepSpec, run_sweep

    spec = SweepSpec.from_dict(read_json(args.spec))
    run_sweep(spec, args.out, parallel=not args.serial)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "adapt": _cmd_adapt,
    "eval": _cmd_eval,
    "bound": _cmd_bound,
    "sweep": _cmd_sweep,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ContractError, ConfigError, DivergenceError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
