"""Random penalized losses shared by the solver properties and the acceptance suite."""

import numpy as np

from ewround.graph import erdos_renyi, grid_graph
from ewround.objectives import (
    assemble_penalized,
    cardinality_function,
    clique_number_upper_bound,
    edge_cover_function,
    linear_function,
    maxclique_relaxation,
    node_matching_function,
)
from ewround.proxy import build_topology, init_params, proxy_function

LOSS_KINDS = ("con", "clique", "cover", "matching", "cardinality")


def random_loss(seed: int, kind: str | None = None):
    """A concave-structured PenalizedLoss of a randomly chosen family."""
    rng = np.random.default_rng(seed)
    kind = kind or LOSS_KINDS[seed % len(LOSS_KINDS)]
    beta = float(rng.uniform(0.5, 50.0))
    if kind == "con":
        cols = int(rng.integers(2, 4))
        inst = grid_graph(2, cols, rng.uniform(0, 1, size=(2 * cols, 1)))
        scope = str(rng.choice(["node", "edge"]))
        arch = str(rng.choice(["CON", "higher-CON"]))
        P = init_params(arch, build_topology(inst, scope), width=4, seed=rng)
        f = proxy_function(P, inst)
        n = f.arity
        gs = [cardinality_function(n, int(rng.integers(0, n)))]
        return assemble_penalized(f, gs, beta, scope=scope)
    if kind == "clique":
        inst = erdos_renyi(int(rng.integers(3, 11)), float(rng.uniform(0.2, 0.9)), rng)
        f, g = maxclique_relaxation(inst)
        w = clique_number_upper_bound(inst)
        return assemble_penalized(f.shifted(w * (w - 1) / 2), [g], beta, scope="node")
    if kind in ("cover", "matching"):
        rows, cols = int(rng.integers(1, 3)), int(rng.integers(2, 4))
        inst = grid_graph(rows, cols)
        f = linear_function(rng.uniform(-5, 20, size=inst.edge_count))
        g = edge_cover_function(inst) if kind == "cover" else node_matching_function(inst)
        return assemble_penalized(f, [g], beta, scope="edge")
    n = int(rng.integers(2, 12))
    f = linear_function(rng.uniform(-5, 5, size=n))
    return assemble_penalized(f, [cardinality_function(n, int(rng.integers(0, n)))], beta, scope="node")


def is_non_increasing(trace, tol: float = 1e-9) -> bool:
    return all(b <= a + tol for a, b in zip(trace, trace[1:]))


ACCEPTANCE_LINES: list[str] = []


def record(label: str, passed: bool, detail: str) -> None:
    """Print and keep one pass/fail line per acceptance criterion."""
    line = f"{label} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
