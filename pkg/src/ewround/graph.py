"""Problem instances, soft assignments, ground-truth generators and datasets."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "GraphInstance",
    "SoftAssignment",
    "LabeledSample",
    "DatasetConfig",
    "load_instance",
    "save_instance",
    "instance_to_dict",
    "instance_from_dict",
    "grid_graph",
    "erdos_renyi",
    "single_edge",
    "toy_ground_truth_cost",
    "toy_coefficients",
    "application1_edge_weight",
    "sample_dataset",
    "write_dataset",
    "read_dataset",
]


class InstanceError(ValueError):
    """Raised when an instance or assignment violates its invariants."""


@dataclass(frozen=True, eq=False)
class GraphInstance:
    """An undirected simple graph with real node attributes.

    Edges are stored as ``(min, max)`` pairs in the order given; that order
    defines the edge-scope variable indexing.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    node_attrs: np.ndarray
    edge_attrs: np.ndarray | None = None

    def __post_init__(self) -> None:
        if int(self.node_count) < 1:
            raise InstanceError(f"node_count must be positive, got {self.node_count}")
        n = int(self.node_count)
        seen: set[tuple[int, int]] = set()
        canon = []
        for k, e in enumerate(self.edges):
            if len(e) != 2:
                raise InstanceError(f"edge {k} is not a pair: {e!r}")
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise InstanceError(f"self-loop at edge {k}: [{u}, {v}]")
            if not (0 <= u < n and 0 <= v < n):
                raise InstanceError(f"edge {k} endpoint out of range: [{u}, {v}] with {n} nodes")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InstanceError(f"duplicate edge {k}: [{u}, {v}]")
            seen.add(key)
            canon.append(key)
        attrs = np.asarray(self.node_attrs, dtype=float)
        if attrs.ndim == 1:
            attrs = attrs.reshape(n, -1) if attrs.size else np.zeros((n, 0))
        if attrs.ndim != 2 or attrs.shape[0] != n:
            raise InstanceError(f"node_attrs must have one row per node, got shape {attrs.shape}")
        attrs = attrs.copy()
        attrs.setflags(write=False)
        eattrs = self.edge_attrs
        if eattrs is not None:
            eattrs = np.asarray(eattrs, dtype=float)
            if eattrs.ndim == 1:
                eattrs = eattrs.reshape(len(canon), -1)
            if eattrs.shape[0] != len(canon):
                raise InstanceError("edge_attrs must have one row per edge")
            eattrs = eattrs.copy()
            eattrs.setflags(write=False)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "node_attrs", attrs)
        object.__setattr__(self, "edge_attrs", eattrs)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def attr_dim(self) -> int:
        return self.node_attrs.shape[1]

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=int).reshape(-1, 2)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def incident_edges(self) -> list[list[int]]:
        inc: list[list[int]] = [[] for _ in range(self.node_count)]
        for k, (u, v) in enumerate(self.edges):
            inc[u].append(k)
            inc[v].append(k)
        return inc

    def edge_adjacent_pairs(self) -> list[tuple[int, int]]:
        """Pairs of distinct edges sharing an endpoint (the line graph's edges)."""
        pairs = set()
        for inc in self.incident_edges():
            for i in range(len(inc)):
                for j in range(i + 1, len(inc)):
                    pairs.add((min(inc[i], inc[j]), max(inc[i], inc[j])))
        return sorted(pairs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphInstance):
            return NotImplemented
        if self.node_count != other.node_count or self.edges != other.edges:
            return False
        if not np.array_equal(self.node_attrs, other.node_attrs):
            return False
        if (self.edge_attrs is None) != (other.edge_attrs is None):
            return False
        return self.edge_attrs is None or np.array_equal(self.edge_attrs, other.edge_attrs)

    def __hash__(self) -> int:
        return hash((self.node_count, self.edges, self.node_attrs.tobytes()))


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    scope: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.scope not in ("node", "edge"):
            raise InstanceError(f"unknown scope {self.scope!r}")
        vals = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0) or np.any(vals > 1.0):
            raise InstanceError("soft assignment entries must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def check_against(self, instance: GraphInstance) -> None:
        expected = instance.node_count if self.scope == "node" else instance.edge_count
        if len(self.values) != expected:
            raise InstanceError(
                f"{self.scope}-scope assignment needs {expected} entries, got {len(self.values)}"
            )


@dataclass(frozen=True)
class LabeledSample:
    assignment: tuple[int, ...]
    cost: float
    constraint_value: float | None = None

    def __post_init__(self) -> None:
        if any(a not in (0, 1) for a in self.assignment):
            raise InstanceError("labeled assignment must be binary")
        if not math.isfinite(self.cost):
            raise InstanceError("labeled cost must be finite")


# ---------------------------------------------------------------- serialization


def instance_to_dict(inst: GraphInstance) -> dict:
    d: dict = {
        "nodes": [{"attrs": [float(a) for a in row]} for row in inst.node_attrs],
        "edges": [[u, v] for u, v in inst.edges],
    }
    if inst.edge_attrs is not None:
        d["edge_attrs"] = inst.edge_attrs.tolist()
    return d


def instance_from_dict(d: dict) -> GraphInstance:
    if not isinstance(d, dict) or "nodes" not in d or "edges" not in d:
        raise InstanceError("graph JSON needs 'nodes' and 'edges'")
    nodes = d["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise InstanceError("'nodes' must be a non-empty list")
    attrs = []
    for k, node in enumerate(nodes):
        if not isinstance(node, dict) or not isinstance(node.get("attrs", []), list):
            raise InstanceError(f"node {k} must be an object with an 'attrs' list")
        attrs.append([float(a) for a in node.get("attrs", [])])
    if len({len(a) for a in attrs}) > 1:
        raise InstanceError("node attribute vectors differ in dimension")
    edges = d["edges"]
    if not isinstance(edges, list):
        raise InstanceError("'edges' must be a list")
    for k, e in enumerate(edges):
        if not isinstance(e, list) or len(e) != 2 or not all(isinstance(i, int) for i in e):
            raise InstanceError(f"edge {k} must be a pair of integers: {e!r}")
    return GraphInstance(
        node_count=len(nodes),
        edges=tuple(tuple(e) for e in edges),
        node_attrs=np.array(attrs, dtype=float).reshape(len(nodes), -1),
        edge_attrs=d.get("edge_attrs"),
    )


def load_instance(path: str | Path) -> GraphInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


def save_instance(inst: GraphInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


# ---------------------------------------------------------------- generators


def grid_graph(rows: int, cols: int, node_attrs: np.ndarray | None = None) -> GraphInstance:
    """Lattice graph; edges are horizontal per row, then vertical per column."""
    edges = []
    for r in range(rows):
        for c in range(cols - 1):
            edges.append((r * cols + c, r * cols + c + 1))
    for c in range(cols):
        for r in range(rows - 1):
            edges.append((r * cols + c, (r + 1) * cols + c))
    n = rows * cols
    attrs = np.zeros((n, 1)) if node_attrs is None else node_attrs
    return GraphInstance(n, tuple(edges), attrs)


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> GraphInstance:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    return GraphInstance(n, edges, np.ones((n, 1)))


def single_edge(a: float, b: float) -> GraphInstance:
    return GraphInstance(2, ((0, 1),), np.array([[a], [b]], dtype=float))


# ---------------------------------------------------------------- ground truths


def toy_coefficients(c1: float, c2: float) -> tuple[float, float, float, float]:
    g1 = (580.0 - 10.0 * c1 - 3.0 * c2) / 33.0
    g2 = (580.0 - 10.0 * c2 - 3.0 * c1) / 33.0
    g3 = (3.0 * c1 + 3.0 * c2) / 45.0
    g4 = -(5.0 * c1 + 5.0 * c2) / 33.0 + 60.0
    return g1, g2, g3, g4


def toy_ground_truth_cost(c: Sequence[float], x: Sequence[float]) -> float:
    """Two-variable toy cost; also its own multilinear extension for soft ``x``."""
    g1, g2, g3, g4 = toy_coefficients(float(c[0]), float(c[1]))
    x1, x2 = float(x[0]), float(x[1])
    return g1 * x1 + g2 * x2 + g3 * x1 * x2 + g4


def application1_edge_weight(problem: str, zv: float, zu: float) -> float:
    if problem == "cover":
        return (zv + zu) / 3.0 + zv * zu / 100.0
    if problem == "match":
        return zv * zu
    raise ValueError(f"unknown application-I problem {problem!r}")


def edge_weights(problem: str, inst: GraphInstance) -> np.ndarray:
    z = inst.node_attrs[:, 0]
    return np.array([application1_edge_weight(problem, z[v], z[u]) for u, v in inst.edges])


# ---------------------------------------------------------------- datasets

FAMILIES = ("toy", "cover", "match", "table")


@dataclass(frozen=True)
class DatasetConfig:
    family: str
    count: int
    grid: tuple[int, int] = (3, 3)
    toy_range: tuple[float, float] = (0.0, 60.0)
    attr_range: tuple[int, int] = (0, 99)
    table_arity: int = 4


def _table_values(arity: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=2**arity)


def sample_dataset(config: DatasetConfig, seed: int) -> list[tuple[GraphInstance, LabeledSample]]:
    """Draw (configuration, assignment, cost) triples; assignments are uniform on {0,1}^n."""
    if config.family not in FAMILIES:
        raise ValueError(f"unknown dataset family {config.family!r}; expected one of {FAMILIES}")
    root = np.random.SeedSequence(seed)
    cfg_seq, x_seq, aux_seq = root.spawn(3)
    cfg_rng = np.random.default_rng(cfg_seq)
    x_rng = np.random.default_rng(x_seq)
    out: list[tuple[GraphInstance, LabeledSample]] = []
    if config.family == "table":
        table = _table_values(config.table_arity, np.random.default_rng(aux_seq))
    for _ in range(config.count):
        if config.family == "toy":
            lo, hi = config.toy_range
            c = cfg_rng.uniform(lo, hi, size=2)
            inst = single_edge(c[0], c[1])
            x = x_rng.integers(0, 2, size=2)
            cost = toy_ground_truth_cost(c, x)
        elif config.family in ("cover", "match"):
            rows, cols = config.grid
            lo, hi = config.attr_range
            z = cfg_rng.integers(lo, hi + 1, size=(rows * cols, 1)).astype(float)
            inst = grid_graph(rows, cols, z)
            x = x_rng.integers(0, 2, size=inst.edge_count)
            cost = float(edge_weights(config.family, inst) @ x)
        else:
            n = config.table_arity
            z = cfg_rng.uniform(0.0, 1.0, size=(n, 1))
            inst = GraphInstance(n, tuple((i, i + 1) for i in range(n - 1)), z)
            x = x_rng.integers(0, 2, size=n)
            idx = int(sum(int(b) << j for j, b in enumerate(x)))
            cost = float(table[idx])
        out.append((inst, LabeledSample(tuple(int(b) for b in x), float(cost))))
    return out


def write_dataset(samples: Iterable[tuple[GraphInstance, LabeledSample]], directory: str | Path) -> Path:
    """Write ``samples.csv`` (x_0..x_{n-1}, cost[, g]) plus ``instances.jsonl`` row-aligned."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples = list(samples)
    n = len(samples[0][1].assignment) if samples else 0
    has_g = any(s.constraint_value is not None for _, s in samples)
    header = [f"x_{i}" for i in range(n)] + ["cost"] + (["g"] if has_g else [])
    with open(directory / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for _, s in samples:
            row = [str(b) for b in s.assignment] + [repr(float(s.cost))]
            if has_g:
                row.append("" if s.constraint_value is None else repr(float(s.constraint_value)))
            w.writerow(row)
    with open(directory / "instances.jsonl", "w") as fh:
        for inst, _ in samples:
            fh.write(json.dumps(instance_to_dict(inst)) + "\n")
    return directory


def read_dataset(directory: str | Path) -> list[tuple[GraphInstance, LabeledSample]]:
    directory = Path(directory)
    with open(directory / "samples.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x_"))
    if header[:n] != [f"x_{i}" for i in range(n)] or header[n] != "cost":
        raise InstanceError(f"unexpected dataset header {header}")
    with open(directory / "instances.jsonl") as fh:
        insts = [instance_from_dict(json.loads(line)) for line in fh if line.strip()]
    if len(insts) != len(body):
        raise InstanceError("instances.jsonl and samples.csv have different lengths")
    out = []
    for inst, row in zip(insts, body):
        g = float(row[n + 1]) if len(row) > n + 1 and row[n + 1] != "" else None
        out.append((inst, LabeledSample(tuple(int(v) for v in row[:n]), float(row[n]), g)))
    return out
