"""Command-line entry point: generate data, train proxies, solve instances, run benchmarks.

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible result, 3 guarantee violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    GAConfig,
    SAConfig,
    brute_force,
    genetic_algorithm,
    naive_threshold_round,
    simulated_annealing,
)
from .bench import METHODS, load_suite, run_suite
from .graph import (
    FAMILIES,
    DatasetConfig,
    GraphInstance,
    InstanceError,
    erdos_renyi,
    grid_graph,
    load_instance,
    read_dataset,
    sample_dataset,
    save_instance,
    single_edge,
    write_dataset,
)
from .pipeline import build_problem, load_problem, solve
from .proxy import ARCHITECTURES, TrainConfig, TrainingDivergence, load_checkpoint, save_checkpoint, train_proxy
from .solver import ORDERS, OptimizeConfig, optimize_relaxed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_GUARANTEE = 3
OUT_ENV = "EWROUND_OUT"
SOLVE_METHODS = ("solver", "naive", "sa", "ga", "oracle")


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV, "ewround_out"))


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.family:
        samples = sample_dataset(DatasetConfig(args.family, args.count, grid=(args.rows, args.cols)), args.seed)
        path = write_dataset(samples, _out_dir(args))
        print(path)
        return EXIT_OK
    if args.graph == "grid":
        inst = grid_graph(args.rows, args.cols, rng.integers(0, 100, size=(args.rows * args.cols, 1)).astype(float))
    elif args.graph == "er":
        inst = erdos_renyi(args.nodes, args.p, rng)
    elif args.graph == "toy":
        inst = single_edge(args.c[0], args.c[1])
    elif args.graph == "path":
        inst = GraphInstance(args.nodes, tuple((i, i + 1) for i in range(args.nodes - 1)),
                             rng.integers(0, 100, size=(args.nodes, 1)).astype(float))
    else:
        raise UsageError("gen needs --family (dataset) or --graph (instance)")
    out = _out_dir(args)
    path = out if out.suffix == ".json" else out / f"{args.graph}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, path)
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    if not args.data:
        raise UsageError("train needs --data")
    data = read_dataset(args.data)
    cfg = TrainConfig(steps=args.steps, step_size=args.step_size, seed=args.seed, width=args.width,
                      features=args.features, loss=args.loss, batch=args.batch)
    init = None
    prior_curve: list[float] = []
    if args.checkpoint:
        init, payload = load_checkpoint(args.checkpoint)
        prior_curve = list(payload.get("loss_curve", []))
    P, curve = train_proxy(data, cfg, args.arch, scope=args.scope, init=init)
    out = _out_dir(args)
    path = out if out.suffix == ".json" else out / f"proxy_{args.arch}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(P, path, cfg, prior_curve + curve)
    print(json.dumps({"checkpoint": str(path), "final_mse": curve[-1] if curve else None}))
    return EXIT_OK


# ---------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    if not args.instance or not args.problem:
        raise UsageError("solve needs --instance and --problem")
    inst = load_instance(args.instance)
    spec = load_problem(args.problem)
    if args.beta is not None:
        spec = replace(spec, beta=args.beta)
    if args.order is not None:
        spec = replace(spec, order=args.order)
    proxy = load_checkpoint(args.checkpoint)[0] if args.checkpoint else None
    if proxy is not None and spec.kind != "proxy":
        spec = replace(spec, objective="proxy")
    opt = OptimizeConfig(restarts=args.restarts, steps=args.steps, seed=args.seed,
                         parameterization=args.parameterization, step_size=args.step_size)
    built = build_problem(spec, inst, proxy)
    if args.method == "solver":
        result = solve(spec, inst, opt, proxy, built=built)
        payload = result.to_dict()
        X = result.rounded
    else:
        if args.method == "naive":
            X = naive_threshold_round(optimize_relaxed(built.loss, opt, scope=built.scope).values)
        elif args.method == "sa":
            X = simulated_annealing(built.loss, built.n, SAConfig(**spec.baseline.get("sa", {})), args.seed)
        elif args.method == "ga":
            X = genetic_algorithm(built.loss.evaluate_batch, built.n, GAConfig(**spec.baseline.get("ga", {})), args.seed)
        else:
            res = brute_force(built.exact_f or built.loss.f_r, built.exact_g, built.n)
            X = res.best_X if res.feasible else np.zeros(built.n, int)
        payload = {"method": args.method, "rounded": [int(v) for v in X]}
    g = built.constraint(X)
    payload.update({"method": args.method, "feasible": bool(g < 1.0), "true_objective": built.true_objective(X),
                    "beta_source": built.beta.source})
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    if args.method == "solver" and result.guarantee_applicable and not result.guarantee_holds:
        print("guarantee violated under applicable hypotheses", file=sys.stderr)
        return EXIT_GUARANTEE
    return EXIT_OK if g < 1.0 else EXIT_INFEASIBLE


# ---------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    if not args.suite:
        raise UsageError("bench needs --suite (a built-in name or a JSON file)")
    spec = load_suite(args.suite)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.count is not None:
        changes["count"] = args.count
    if args.method:
        changes["methods"] = tuple(m.strip() for m in args.method.split(","))
        bad = [m for m in changes["methods"] if m not in METHODS]
        if bad:
            raise UsageError(f"unknown methods {bad}; choose from {METHODS}")
    if args.order is not None:
        changes["order"] = args.order
    if args.restarts is not None or args.steps is not None:
        changes["optimize"] = replace(spec.optimize, **{k: v for k, v in
                                      (("restarts", args.restarts), ("steps", args.steps)) if v is not None})
    spec = replace(spec, **changes)
    report = run_suite(spec, jobs=args.jobs)
    csv_path, json_path = report.write(_out_dir(args))
    for a in report.aggregates():
        print(json.dumps(a))
    print(csv_path)
    print(json_path)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ewround", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ewround {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset (--family) or an instance (--graph)")
    g.add_argument("--family", choices=FAMILIES)
    g.add_argument("--graph", choices=("grid", "er", "toy", "path"))
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--rows", type=int, default=3)
    g.add_argument("--cols", type=int, default=3)
    g.add_argument("--nodes", type=int, default=20)
    g.add_argument("--p", type=float, default=0.5)
    g.add_argument("--c", type=float, nargs=2, default=(33.0, 33.0), metavar=("C1", "C2"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="fit a proxy to a labeled dataset")
    t.add_argument("--data", help="dataset directory written by 'gen --family'")
    t.add_argument("--arch", choices=ARCHITECTURES, default="AFF")
    t.add_argument("--scope", choices=("node", "edge"), default="node")
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--step-size", type=float, default=1e-2)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--width", type=int, default=8)
    t.add_argument("--features", choices=("linear", "quadratic", "mlp"), default="quadratic")
    t.add_argument("--loss", choices=("squared", "huber"), default="squared")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="solve one instance and print the result as JSON")
    s.add_argument("--instance")
    s.add_argument("--problem", help="problem kind, inline JSON, or a JSON file")
    s.add_argument("--beta", type=float)
    s.add_argument("--order", choices=ORDERS)
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--step-size", type=float, default=0.1)
    s.add_argument("--parameterization", choices=("logistic", "clipped"), default="logistic")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--checkpoint")
    s.add_argument("--method", choices=SOLVE_METHODS, default="solver")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a benchmark suite and write CSV and JSON reports")
    b.add_argument("--suite")
    b.add_argument("--seed", type=int)
    b.add_argument("--count", type=int)
    b.add_argument("--method", help="comma-separated subset of methods")
    b.add_argument("--order", choices=ORDERS)
    b.add_argument("--restarts", type=int)
    b.add_argument("--steps", type=int)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, InstanceError, ValueError, TypeError, json.JSONDecodeError, TrainingDivergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
