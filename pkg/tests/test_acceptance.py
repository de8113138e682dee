"""Acceptance criteria, one test each; every test records a PASS/FAIL line with its numbers."""

import csv
import io
import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from ewround.baselines import brute_force, brute_force_recursive
from ewround.bench import builtin_suite, run_suite
from ewround.cli import main
from ewround.ewconcave import (
    BooleanTable,
    check_entrywise_affine,
    check_entrywise_concave,
    multilinear_eval,
    multilinear_function,
    prop1_construct,
)
from ewround.graph import grid_graph
from ewround.objectives import assemble_penalized, cardinality_function
from ewround.proxy import ARCHITECTURES, _phi, build_topology, encode, init_params, proxy_eval, proxy_gradient
from ewround.solver import ORDERS, sequential_round

from helpers import is_non_increasing, random_loss, record

# ---------------------------------------------------------------- shared benchmark runs


@pytest.fixture(scope="session")
def bench_runs():
    """Every benchmark run of the session, keyed by suite name, with its wall time."""
    return {}


def _bench(bench_runs, name, **changes):
    if name not in bench_runs:
        t0 = time.perf_counter()
        report = run_suite(replace(builtin_suite(name), **changes))
        bench_runs[name] = (report, time.perf_counter() - t0)
    return bench_runs[name]


@pytest.fixture(scope="session")
def clique(bench_runs):
    return _bench(bench_runs, "clique")


@pytest.fixture(scope="session")
def cover(bench_runs):
    return _bench(bench_runs, "cover", methods=("solver", "naive", "oracle"))


@pytest.fixture(scope="session")
def match(bench_runs):
    return _bench(bench_runs, "match", methods=("solver", "naive", "oracle"))


@pytest.fixture(scope="session")
def match34(bench_runs):
    return _bench(bench_runs, "match34", methods=("solver", "naive", "oracle"))


@pytest.fixture(scope="session")
def toy(bench_runs):
    return _bench(bench_runs, "toy")


# ---------------------------------------------------------------- 1


def test_c01_multilinear_extension():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    vertex_err, affine_fail = 0.0, 0
    for k in range(1000):
        n = int(rng.integers(1, 11))
        table = BooleanTable(n, rng.normal(size=2**n))
        for v, h in zip(table.vertices(), table.values):
            vertex_err = max(vertex_err, abs(multilinear_eval(table, v) - h))
        f = multilinear_function(table)
        affine_fail += not check_entrywise_affine(f, n, trials=100, tol=1e-10, seed=k)
    dt = time.perf_counter() - t0
    ok = vertex_err <= 1e-12 and affine_fail == 0 and dt < 30
    record("criterion 1", ok, f"1000 tables, max vertex error {vertex_err:.1e}, "
           f"{affine_fail} affinity failures, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_c02_rectifier_construction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    mismatches, concave_fail, float_err = 0, 0, 0.0
    for k in range(1000):
        table = BooleanTable(2, rng.normal(size=4))
        p = prop1_construct(table)
        for v, h in zip(table.vertices(), table.values):
            mismatches += p.evaluate_exact(v) != Fraction(float(h))
            float_err = max(float_err, abs(p(v) - h))
        concave_fail += not check_entrywise_concave(p, 2, trials=200, seed=k)
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and concave_fail == 0 and dt < 10
    record("criterion 2", ok, f"1000 tables, {mismatches} exact vertex mismatches "
           f"(float path max error {float_err:.1e}), {concave_fail} concavity failures, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3


def test_c03_monotone_rounding():
    t0 = time.perf_counter()
    bad, worst = 0, -math.inf
    for seed in range(1000):
        L = random_loss(seed)
        x = np.random.default_rng(seed).uniform(size=L.arity)
        trace = sequential_round(L, x, ORDERS[seed % 3]).loss_trace
        bad += not is_non_increasing(trace, 1e-9)
        worst = max([worst] + [b - a for a, b in zip(trace, trace[1:])])
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 120
    record("criterion 3", ok, f"1000 instances (CON proxy, clique, cover, matching, cardinality), "
           f"{bad} non-monotone traces, largest step increase {worst:.1e}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5


def test_c05_gradient_checks():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    h = 1e-5
    worst, points, skipped = 0.0, 0, 0
    while points < 500:
        arch = ARCHITECTURES[points % len(ARCHITECTURES)]
        scope = ("node", "edge")[(points // 4) % 2]
        features = ("linear", "quadratic", "mlp")[(points // 8) % 3]
        rows, cols = int(rng.integers(1, 3)), int(rng.integers(2, 4))
        inst = grid_graph(rows, cols, rng.uniform(0, 1, size=(rows * cols, 2)))
        P = init_params(arch, build_topology(inst, scope), width=4, features=features, seed=rng)
        n = inst.node_count if scope == "node" else inst.edge_count
        x = rng.uniform(0, 1, size=n)
        phi = _phi(P, encode(P, inst), x[None, :])
        if np.abs(phi).min() < 1e-6:
            skipped += 1
            continue
        ga, _ = proxy_gradient(P, inst, x)
        fd = np.array([(proxy_eval(P, inst, x + h * e) - proxy_eval(P, inst, x - h * e)) / (2 * h)
                       for e in np.eye(n)])
        scale = max(np.abs(ga).max(), np.abs(fd).max(), 1e-12)
        worst = max(worst, float(np.abs(ga - fd).max() / scale))
        points += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt < 30
    record("criterion 5", ok, f"500 points over {len(ARCHITECTURES)} heads x 2 scopes x 3 feature maps, "
           f"max relative error {worst:.1e} ({skipped} kink points resampled), {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 6, 7


def test_c06_clique_ratio(clique):
    report, dt = clique
    a = report.aggregate("solver")
    ok = a["mean_ratio"] >= 0.80 and a["rows"] == 50 and dt < 300
    record("criterion 6", ok, f"50 G(20,0.5) graphs, mean approximation ratio {a['mean_ratio']:.3f} "
           f"(feasible {a['feasibility_rate']:.2f}), suite {dt:.0f}s")
    assert ok


def test_c07_badloss_ablation(clique):
    report, dt = clique
    good, bad = report.aggregate("solver")["mean_ratio"], report.aggregate("badloss")["mean_ratio"]
    ok = bad < good
    record("criterion 7", ok, f"warped ratio {bad:.3f} < unwarped ratio {good:.3f}")
    assert ok


# ---------------------------------------------------------------- 8


def _app1_summary(report):
    a = report.aggregate("solver")
    o = report.aggregate("oracle")
    return a, o


def test_c08_application_one(cover, match, match34):
    (crep, cdt), (mrep, mdt), (m34, m34dt) = cover, match, match34
    ca, co = _app1_summary(crep)
    ma, mo = _app1_summary(mrep)
    cover_ok = ca["feasibility_rate"] == 1.0 and ca["mean_gap"] <= 0.10
    match_ok = ma["feasibility_rate"] == 1.0 and not math.isnan(ma["mean_gap"]) and ma["mean_gap"] <= 0.10
    ok = cover_ok and match_ok and cdt + mdt < 600
    xa, xo = _app1_summary(m34)
    record("criterion 8", ok,
           f"cover 3x3: feasible {ca['feasibility_rate']:.2f}, gap {100 * ca['mean_gap']:.2f}% ({cdt:.0f}s); "
           f"match 3x3: feasible {ma['feasibility_rate']:.2f}, oracle feasible {mo['feasibility_rate']:.2f} "
           f"(9 nodes admit no perfect matching) ({mdt:.0f}s)")
    record("criterion 8-supplement", xa["feasibility_rate"] == 1.0 and xa["mean_gap"] <= 0.10,
           f"match 3x4: feasible {xa['feasibility_rate']:.2f}, gap {100 * xa['mean_gap']:.2f}% ({m34dt:.0f}s)")
    assert cover_ok, "covering half of the criterion"
    assert match_ok, (
        "matching on 3x3 grids is infeasible for every method including brute force: "
        "a perfect matching needs an even node count"
    )


# ---------------------------------------------------------------- 9


def test_c09_toy_rerun(toy):
    report, dt = toy
    con, mlp = report.aggregate("solver")["mean_ratio"], report.aggregate("mlp")["mean_ratio"]
    ok = con >= mlp and report.aggregate("solver")["rows"] == 49 and dt < 300
    record("criterion 9", ok, f"49 configurations, CON pipeline recovery {con:.3f} >= "
           f"MLP + threshold recovery {mlp:.3f}, {dt:.0f}s")
    assert ok


# ---------------------------------------------------------------- 10


def _penalized_instance(seed):
    """(f for the vectorized oracle, f for the recursive oracle, g, n)."""
    rng = np.random.default_rng(seed)
    if seed % 2:
        L = random_loss(seed)
        return L.f_r, L.f_r, L.g_r, L.arity
    n = int(rng.integers(1, 17))
    table = BooleanTable(n, rng.integers(-50, 50, size=2**n).astype(float))
    # the recursive oracle reads the table directly, the vectorized one goes through the extension
    return multilinear_function(table), lambda x: table[x.astype(int)], cardinality_function(n, int(rng.integers(0, n))), n


def test_c10_oracle_cross_check():
    t0 = time.perf_counter()
    disagree, sizes = 0, []
    for seed in range(100):
        f_vec, f_rec, g, n = _penalized_instance(seed)
        a, b = brute_force(f_vec, g, n), brute_force_recursive(f_rec, g, n)
        disagree += (a.best_value != b.best_value) or (a.feasible_count != b.feasible_count)
        sizes.append(n)
    dt = time.perf_counter() - t0
    ok = disagree == 0
    record("criterion 10", ok, f"100 penalized instances (n from {min(sizes)} to {max(sizes)}), "
           f"{disagree} disagreements, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 11


def test_c11_bench_determinism(tmp_path, bench_runs, capsys):
    args = ["bench", "--suite", "clique", "--count", "5", "--seed", "11"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a = (tmp_path / "a" / "clique.csv").read_bytes()
    b = (tmp_path / "b" / "clique.csv").read_bytes()
    bench_runs["cli-clique"] = (list(csv.DictReader(io.StringIO(a.decode()))), 0.0)
    ok = a == b and a.count(b"\n") == 1 + 5 * 6
    record("criterion 11", ok, f"two bench runs with seed 11, identical CSV ({len(a)} bytes)")
    assert ok


# ---------------------------------------------------------------- 4 (after the benchmarks above)


def _flags(rows):
    for r in rows:
        if isinstance(r, dict):
            yield r["guarantee_applicable"] == "1", r["guarantee_holds"] == "1", r["feasible"] == "1"
        else:
            yield r.guarantee_applicable, r.guarantee_holds, r.feasible


def test_c04_guarantee_soundness(bench_runs, clique, cover, match, match34, toy):
    applicable = violations = 0
    for name, (report, _) in bench_runs.items():
        rows = report if isinstance(report, list) else report.rows
        for app, holds, feasible in _flags(rows):
            if app:
                applicable += 1
                violations += not (holds and feasible)
    ok = violations == 0 and applicable > 0
    record("criterion 4", ok, f"{applicable} applicable runs across {len(bench_runs)} benchmark runs, "
           f"{violations} violations")
    assert ok


def test_rounding_beats_threshold_decoding(clique, cover, match34):
    """Sequential rounding is at least as good as threshold decoding of the same soft point on 90%."""
    lines = []
    ok_all = True
    for name, (report, _) in (("clique", clique), ("cover", cover), ("match34", match34)):
        by = {}
        for r in report.rows:
            by.setdefault(r.instance_id, {})[r.method] = r
        wins = 0
        for rows in by.values():
            s, nv = rows["solver"], rows["naive"]
            if name == "clique":
                wins += s.ratio >= nv.ratio
            else:
                wins += (s.feasible and (not nv.feasible or s.objective <= nv.objective + 1e-9)) or (
                    not s.feasible and not nv.feasible)
        rate = wins / len(by)
        ok_all &= rate >= 0.9
        lines.append(f"{name} {rate:.2f}")
    record("rounding-vs-threshold", ok_all, ", ".join(lines))
    assert ok_all
