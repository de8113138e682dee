"""Benchmark suites: every method on every instance, one report row per pair, aggregated."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import (
    GAConfig,
    MLPConfig,
    SAConfig,
    brute_force,
    genetic_algorithm,
    max_clique,
    naive_threshold_round,
    simulated_annealing,
    train_mlp_proxy,
)
from .objectives import assemble_penalized
from .graph import DatasetConfig, GraphInstance, erdos_renyi, grid_graph, sample_dataset, single_edge
from .pipeline import BuiltProblem, ProblemSpec, build_problem, solve
from .proxy import ProxyParams, TrainConfig, train_proxy
from .solver import OptimizeConfig, optimize_relaxed

__all__ = [
    "CSV_COLUMNS",
    "AGGREGATE_COLUMNS",
    "REPORT_VERSION",
    "METHODS",
    "SuiteSpec",
    "BenchRow",
    "BenchReport",
    "builtin_suite",
    "load_suite",
    "run_suite",
]

REPORT_VERSION = 1
# wall time stays out of the CSV so reruns are byte-identical; the JSON carries it
CSV_COLUMNS = (
    "instance_id", "method", "status", "objective", "feasible", "oracle", "gap", "ratio",
    "l_r_initial", "guarantee_applicable", "guarantee_holds",
)
AGGREGATE_COLUMNS = ("method", "rows", "mean_objective", "feasibility_rate", "mean_gap", "mean_ratio",
                     "applicable", "holds_when_applicable")
METHODS = ("solver", "badloss", "naive", "sa", "ga", "mlp", "oracle")
FAMILIES = ("clique", "cover", "match", "toy")
SOLVER_METHODS = ("solver", "badloss")


@dataclass(frozen=True)
class SuiteSpec:
    """A benchmark: instance family, count, methods and all the knobs, seeded once."""

    name: str
    family: str
    count: int
    methods: tuple[str, ...]
    seed: int = 0
    graph_nodes: int = 20
    edge_prob: float = 0.5
    grid: tuple[int, int] = (3, 3)
    toy_grid: tuple[float, ...] = (0, 10, 20, 30, 40, 50, 60)
    objective: str = "exact"
    architecture: str = "AFF"
    train_samples: int = 2000
    train: TrainConfig = TrainConfig()
    optimize: OptimizeConfig = OptimizeConfig()
    order: str = "by_confidence"
    sa: SAConfig = SAConfig()
    ga: GAConfig = GAConfig()
    mlp: MLPConfig = MLPConfig()

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown suite family {self.family!r}; expected one of {FAMILIES}")
        if self.count < 0:
            raise ValueError("instance count must be nonnegative")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteSpec":
        d = dict(d)
        nested = {"train": TrainConfig, "optimize": OptimizeConfig, "sa": SAConfig, "ga": GAConfig, "mlp": MLPConfig}
        for key, typ in nested.items():
            if key in d:
                d[key] = typ(**d[key])
        for key in ("methods", "grid", "toy_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def builtin_suite(name: str) -> SuiteSpec:
    """Named suites used by the scripts and the acceptance tests."""
    clique_opt = OptimizeConfig(parameterization="clipped", method="adam", step_size=0.03, restarts=32)
    if name == "clique":
        return SuiteSpec("clique", "clique", 50, ("solver", "badloss", "naive", "sa", "ga", "oracle"),
                         optimize=clique_opt)
    if name in ("cover", "match", "match34"):
        # 3x3 grids have an odd node count and so no perfect matching; match34 uses 3x4 grids
        family = "cover" if name == "cover" else "match"
        grid = (3, 4) if name == "match34" else (3, 3)
        train = TrainConfig(steps=3000, step_size=1e-2, width=8, features="quadratic", seed=0)
        return SuiteSpec(name, family, 100, ("solver", "naive", "sa", "ga", "oracle"), grid=grid,
                         objective="proxy", train=train,
                         optimize=OptimizeConfig(parameterization="clipped", step_size=0.03, restarts=16))
    if name == "toy":
        return SuiteSpec("toy", "toy", 49, ("solver", "mlp", "oracle"), objective="proxy", architecture="CON",
                         train_samples=2000, train=TrainConfig(steps=4000, step_size=1e-2, width=8, seed=0))
    if name == "smoke":
        return SuiteSpec("smoke", "clique", 3, ("solver", "badloss", "naive", "sa", "ga", "oracle"),
                         graph_nodes=8, optimize=replace(clique_opt, restarts=4, steps=100),
                         sa=SAConfig(), ga=GAConfig(population=16, generations=5))
    raise ValueError(f"unknown suite {name!r}")


def load_suite(name_or_path: str) -> SuiteSpec:
    p = Path(name_or_path)
    if p.suffix == ".json" or p.is_file():
        return SuiteSpec.from_dict(json.loads(p.read_text()))
    return builtin_suite(name_or_path)


# ---------------------------------------------------------------- rows


@dataclass
class BenchRow:
    instance_id: int
    method: str
    status: str = "ok"
    objective: float = math.nan
    feasible: bool = False
    oracle: float = math.nan
    gap: float = math.nan
    ratio: float = math.nan
    l_r_initial: float = math.nan
    guarantee_applicable: bool = False
    guarantee_holds: bool = False
    wall_time: float = 0.0

    def csv_values(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if isinstance(v, bool):
                out.append("1" if v else "0")
            elif isinstance(v, float):
                out.append("" if math.isnan(v) else repr(round(v, 10)))
            else:
                out.append(str(v))
        return out


@dataclass
class BenchReport:
    suite: SuiteSpec
    rows: list[BenchRow] = field(default_factory=list)

    def aggregates(self) -> list[dict]:
        out = []
        for m in self.suite.methods:
            rs = [r for r in self.rows if r.method == m and r.status == "ok"]
            allr = [r for r in self.rows if r.method == m]
            if not allr:
                continue
            objs = [r.objective for r in rs if r.feasible]
            gaps = [r.gap for r in rs if not math.isnan(r.gap)]
            ratios = [r.ratio for r in rs if not math.isnan(r.ratio)]
            app = [r for r in rs if r.guarantee_applicable]
            out.append({
                "method": m,
                "rows": len(allr),
                "mean_objective": float(np.mean(objs)) if objs else math.nan,
                "feasibility_rate": sum(r.feasible for r in rs) / len(allr),
                "mean_gap": float(np.mean(gaps)) if gaps else math.nan,
                "mean_ratio": float(np.mean(ratios)) if ratios else math.nan,
                "applicable": len(app),
                "holds_when_applicable": sum(r.guarantee_holds for r in app),
            })
        return out

    def aggregate(self, method: str) -> dict:
        for a in self.aggregates():
            if a["method"] == method:
                return a
        raise KeyError(method)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_values())
        return buf.getvalue()

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "version": REPORT_VERSION,
            "columns": list(CSV_COLUMNS) + ["wall_time"],
            "suite": self.suite.to_dict(),
            "rows": [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows],
            "aggregates": [{k: clean(v) for k, v in a.items()} for a in self.aggregates()],
        }

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        csv_path = d / f"{self.suite.name}.csv"
        json_path = d / f"{self.suite.name}.json"
        csv_path.write_text(self.csv_text())
        json_path.write_text(json.dumps(self.to_dict(), indent=2))
        return csv_path, json_path


# ---------------------------------------------------------------- instances and shared training


def _instances(spec: SuiteSpec) -> list[GraphInstance]:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    if spec.family == "clique":
        return [erdos_renyi(spec.graph_nodes, spec.edge_prob, rng) for _ in range(spec.count)]
    if spec.family in ("cover", "match"):
        rows, cols = spec.grid
        out = []
        for _ in range(spec.count):
            z = rng.integers(0, 100, size=(rows * cols, 1)).astype(float)
            out.append(grid_graph(rows, cols, z))
        return out
    grid = [(a, b) for a in spec.toy_grid for b in spec.toy_grid]
    return [single_edge(a, b) for a, b in grid[: spec.count]]


def _problem(spec: SuiteSpec, badloss: bool = False) -> ProblemSpec:
    kind = {"clique": "maxclique", "cover": "edge_cover", "match": "node_matching", "toy": "toy"}[spec.family]
    return ProblemSpec(kind=kind, objective=spec.objective, badloss=badloss, order=spec.order)


def _train_shared(spec: SuiteSpec) -> dict:
    """Proxies fitted once per suite on a training set disjoint from the test seed stream."""
    shared: dict = {}
    needs_proxy = spec.objective == "proxy" and any(m in SOLVER_METHODS + ("naive",) for m in spec.methods)
    if needs_proxy or "mlp" in spec.methods:
        family = {"cover": "cover", "match": "match", "toy": "toy"}.get(spec.family)
        if family is None:
            raise ValueError(f"suite family {spec.family!r} has no training data generator")
        data = sample_dataset(DatasetConfig(family, spec.train_samples, grid=spec.grid), seed=spec.seed + 10_000)
        scope = "node" if spec.family == "toy" else "edge"
        if needs_proxy:
            shared["proxy"], shared["curve"] = train_proxy(data, spec.train, spec.architecture, scope=scope)
        if "mlp" in spec.methods:
            C = np.array([inst.node_attrs[:, 0] for inst, _ in data])
            X = np.array([s.assignment for _, s in data], float)
            y = np.array([s.cost for _, s in data])
            shared["mlp"] = train_mlp_proxy(C, X, y, spec.mlp)
    return shared


# ---------------------------------------------------------------- one instance


def _oracle(spec: SuiteSpec, inst: GraphInstance, built: BuiltProblem) -> tuple[float, np.ndarray | None]:
    """Best objective in the reporting frame: clique size, or minimum true cost."""
    if spec.family == "clique":
        best = max_clique(inst)
        X = np.zeros(inst.node_count, int)
        X[best] = 1
        return float(len(best)), X
    res = brute_force(built.exact_f, built.exact_g, built.n)
    return (res.best_value if res.feasible else math.nan), res.best_X


def _score(spec: SuiteSpec, built: BuiltProblem, X: np.ndarray, row: BenchRow) -> None:
    X = np.asarray(X, dtype=float)
    feasible = built.constraint(X) < 1.0
    row.feasible = bool(feasible)
    if spec.family == "clique":
        row.objective = float(X.sum()) if feasible else 0.0
        if not math.isnan(row.oracle) and row.oracle > 0:
            row.ratio = row.objective / row.oracle
        return
    row.objective = built.true_objective(X)
    if feasible and not math.isnan(row.oracle):
        row.gap = (row.objective - row.oracle) / abs(row.oracle) if row.oracle != 0 else row.objective - row.oracle
        if spec.family == "toy":
            row.ratio = 1.0 if abs(row.objective - row.oracle) <= 1e-9 * max(1.0, abs(row.oracle)) else 0.0


def _exact_built(spec: SuiteSpec, inst: GraphInstance) -> BuiltProblem:
    return build_problem(replace(_problem(spec), objective="exact"), inst)


def _run_instance(args) -> list[BenchRow]:
    spec, idx, inst, shared, seed = args
    exact = _exact_built(spec, inst)
    oracle_val, oracle_X = _oracle(spec, inst, exact)
    rows: list[BenchRow] = []
    soft_cache: dict = {}
    proxy: ProxyParams | None = shared.get("proxy")
    opt = replace(spec.optimize, seed=seed)
    for method in spec.methods:
        row = BenchRow(idx, method, oracle=oracle_val)
        t0 = time.perf_counter()
        try:
            if method in SOLVER_METHODS:
                pspec = _problem(spec, badloss=(method == "badloss"))
                built = build_problem(pspec, inst, proxy)
                res = solve(pspec, inst, opt, proxy, built=built)
                soft_cache[method] = (built, res)
                row.l_r_initial = res.l_r_initial
                row.guarantee_applicable = res.guarantee_applicable
                row.guarantee_holds = res.guarantee_holds
                X = res.rounded
            elif method == "naive":
                if "solver" in soft_cache:
                    built, res = soft_cache["solver"]
                    soft = res.soft.values
                else:
                    built = build_problem(_problem(spec), inst, proxy)
                    soft = optimize_relaxed(built.loss, opt, scope=built.scope).values
                X = naive_threshold_round(soft)
            elif method == "sa":
                loss = build_problem(_problem(spec), inst, proxy).loss
                X = simulated_annealing(loss, loss.arity, spec.sa, seed)
            elif method == "ga":
                loss = build_problem(_problem(spec), inst, proxy).loss
                X = genetic_algorithm(loss.evaluate_batch, loss.arity, spec.ga, seed)
            elif method == "mlp":
                f = shared["mlp"].function(inst.node_attrs[:, 0])
                loss = assemble_penalized(f, [], 1.0)
                soft = optimize_relaxed(loss, opt, scope="node").values
                X = naive_threshold_round(soft)
            else:
                X = oracle_X
                if X is None:
                    row.status = "infeasible"
                    row.wall_time = time.perf_counter() - t0
                    rows.append(row)
                    continue
            _score(spec, exact, X, row)
        except Exception as exc:  # a failing row is reported, not fatal
            row.status = f"error:{type(exc).__name__}"
        row.wall_time = time.perf_counter() - t0
        rows.append(row)
    return rows


def run_suite(spec: SuiteSpec, jobs: int = 1) -> BenchReport:
    """Run every method on every instance; rows come back in (instance, method) order."""
    report = BenchReport(spec)
    if spec.count == 0 or not spec.methods:
        return report
    insts = _instances(spec)
    shared = _train_shared(spec)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence([spec.seed, 2]).spawn(len(insts))]
    tasks = [(spec, i, inst, shared, seeds[i]) for i, inst in enumerate(insts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_instance, tasks))
    else:
        results = [_run_instance(t) for t in tasks]
    for rows in results:
        report.rows.extend(rows)
    return report
