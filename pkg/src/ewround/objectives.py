"""Explicit relaxed objectives and constraints, normalization and penalty assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ewconcave import BooleanTable, RelaxedFunction, Structure, multilinear_function
from .graph import GraphInstance, InstanceError, edge_weights, toy_coefficients

__all__ = [
    "PenalizedLoss",
    "NormalizationSpec",
    "BetaBound",
    "NoFeasiblePointError",
    "maxclique_relaxation",
    "maxclique_loss",
    "edge_cover_penalty",
    "edge_cover_penalty_lse",
    "node_matching_penalty",
    "cardinality_penalty",
    "edge_cover_function",
    "node_matching_function",
    "cardinality_function",
    "linear_function",
    "toy_function",
    "normalize_constraint",
    "assemble_penalized",
    "beta_bound",
    "badloss_warp",
    "clique_number_upper_bound",
    "all_binary",
]

LSE_FLOOR = 1e-12


class NoFeasiblePointError(ValueError):
    """Raised when enumeration finds no X with g(X) < 1."""


def all_binary(n: int) -> np.ndarray:
    k = np.arange(2**n)
    return ((k[:, None] >> np.arange(n)[None, :]) & 1).astype(float)


# ---------------------------------------------------------------- max clique


def _check_len(x: np.ndarray, n: int, what: str) -> None:
    if x.shape[-1] != n:
        raise InstanceError(f"{what} expects {n} variables, got {x.shape[-1]}")


def _row_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis in C order, so a batch row and the same row alone agree to the bit."""
    return np.ascontiguousarray(a).sum(axis=-1)


def maxclique_relaxation(inst: GraphInstance) -> tuple[RelaxedFunction, RelaxedFunction]:
    """Split the clique loss into f_r = -(selected edges) and g_r = (selected non-adjacent pairs).

    f_r + beta * g_r equals -(beta+1) sum_E x_i x_j + (beta/2) sum_{i != j} x_i x_j.
    Both parts are multilinear, and g_r < 1 at a vertex exactly when it is a clique.
    """
    n = inst.node_count
    A = inst.adjacency()
    iu, ju = np.triu_indices(n, 1)
    edge = A[iu, ju] > 0
    ei, ej = iu[edge], ju[edge]
    ni, nj = iu[~edge], ju[~edge]

    def f_batch(xs):
        return -_row_sum(xs[..., ei] * xs[..., ej])

    def g_batch(xs):
        return _row_sum(xs[..., ni] * xs[..., nj])

    def f(x):
        return float(f_batch(x))

    def g(x):
        return float(g_batch(x))

    def f_grad(x):
        return -(A @ x)

    def g_grad(x):
        return (x.sum() - x) - A @ x

    fr = RelaxedFunction(f, n, Structure.AFFINE, f_grad, f_batch, "clique_edges")
    gr = RelaxedFunction(g, n, Structure.AFFINE, g_grad, g_batch, "clique_nonedges")
    return fr, gr


def maxclique_loss(inst: GraphInstance, x, beta: float) -> float:
    x = np.asarray(x, dtype=float)
    _check_len(x, inst.node_count, "clique loss")
    if beta <= 0:
        raise ValueError("beta must be positive")
    A = inst.adjacency()
    edge_term = 0.5 * x @ A @ x
    s = x.sum()
    ordered_pairs = s * s - x @ x
    return float(-(beta + 1.0) * edge_term + 0.5 * beta * ordered_pairs)


def clique_number_upper_bound(inst: GraphInstance) -> int:
    """Degeneracy + 1, an upper bound on the clique number."""
    nbrs = [set(v) for v in inst.neighbors()]
    alive = set(range(inst.node_count))
    deg = {v: len(nbrs[v]) for v in alive}
    k = 0
    while alive:
        v = min(alive, key=lambda u: (deg[u], u))
        k = max(k, deg[v])
        alive.remove(v)
        for u in nbrs[v]:
            if u in alive:
                deg[u] -= 1
    return k + 1


# ---------------------------------------------------------------- edge-scope constraints


class _Incidence:
    """Padded node -> incident-edge table; pad slots point at a phantom edge fixed at 0."""

    def __init__(self, inst: GraphInstance):
        inc = inst.incident_edges()
        self.m = inst.edge_count
        width = max((len(i) for i in inc), default=0)
        self.table = np.full((inst.node_count, max(width, 1)), self.m, dtype=int)
        for v, es in enumerate(inc):
            self.table[v, : len(es)] = es
        self.mask = self.table < self.m

    def gather(self, x: np.ndarray) -> np.ndarray:
        xp = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
        return xp[..., self.table]


def _exclusive_prod(a: np.ndarray) -> np.ndarray:
    """prod of a along the last axis excluding each position, without division."""
    ones = np.ones(a.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, a[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, a[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return left * right


def _uncovered_terms(inc: _Incidence, x: np.ndarray) -> np.ndarray:
    return np.prod(np.ascontiguousarray(1.0 - inc.gather(x)), axis=-1)


def _uncovered_grad(inc: _Incidence, x: np.ndarray) -> np.ndarray:
    ex = _exclusive_prod(1.0 - inc.gather(x))
    g = np.zeros(inc.m + 1)
    np.add.at(g, inc.table, -ex)
    return g[: inc.m]


def _conflict_terms(inc: _Incidence, x: np.ndarray) -> np.ndarray:
    xe = inc.gather(x)
    s = _row_sum(xe)
    return 0.5 * (s * s - _row_sum(xe * xe))


def _conflict_grad(inc: _Incidence, x: np.ndarray) -> np.ndarray:
    xe = inc.gather(x)
    s = xe.sum(axis=-1, keepdims=True)
    contrib = np.where(inc.mask, s - xe, 0.0)
    g = np.zeros(inc.m + 1)
    np.add.at(g, inc.table, contrib)
    return g[: inc.m]


def edge_cover_penalty(inst: GraphInstance, x) -> float:
    """Sum over nodes of prod over incident edges of (1 - x_e); isolated nodes add 1."""
    x = np.asarray(x, dtype=float)
    _check_len(x, inst.edge_count, "edge cover penalty")
    return float(_uncovered_terms(_Incidence(inst), x).sum())


def edge_cover_penalty_lse(inst: GraphInstance, x, eps: float = LSE_FLOOR) -> float:
    """Same value through exp(sum log(1 - x_e)), with 1 - x_e floored at ``eps``."""
    x = np.asarray(x, dtype=float)
    _check_len(x, inst.edge_count, "edge cover penalty")
    total = 0.0
    for es in inst.incident_edges():
        total += math.exp(sum(math.log(max(1.0 - x[e], eps)) for e in es))
    return total


def node_matching_penalty(inst: GraphInstance, x) -> float:
    """Uncovered-node terms plus, per node, the sum over unordered pairs of incident edges."""
    x = np.asarray(x, dtype=float)
    _check_len(x, inst.edge_count, "node matching penalty")
    inc = _Incidence(inst)
    return float(_uncovered_terms(inc, x).sum() + _conflict_terms(inc, x).sum())


def edge_cover_function(inst: GraphInstance) -> RelaxedFunction:
    inc = _Incidence(inst)
    return RelaxedFunction(
        fn=lambda x: float(_row_sum(_uncovered_terms(inc, x))),
        arity=inst.edge_count,
        structure=Structure.AFFINE,
        grad=lambda x: _uncovered_grad(inc, x),
        batch=lambda xs: _row_sum(_uncovered_terms(inc, xs)),
        name="edge_cover",
    )


def node_matching_function(inst: GraphInstance) -> RelaxedFunction:
    inc = _Incidence(inst)
    return RelaxedFunction(
        fn=lambda x: float(_row_sum(_uncovered_terms(inc, x) + _conflict_terms(inc, x))),
        arity=inst.edge_count,
        structure=Structure.AFFINE,
        grad=lambda x: _uncovered_grad(inc, x) + _conflict_grad(inc, x),
        batch=lambda xs: _row_sum(_uncovered_terms(inc, xs) + _conflict_terms(inc, xs)),
        name="node_matching",
    )


# ---------------------------------------------------------------- cardinality & linear


def cardinality_penalty(n: int, t: int, x) -> float:
    """(n - sum x) / (n - t); below 1 exactly when more than t entries are selected."""
    if not 0 <= t < n:
        raise ValueError(f"cardinality threshold needs 0 <= t < n, got t={t}, n={n}")
    x = np.asarray(x, dtype=float)
    _check_len(x, n, "cardinality penalty")
    return float((n - x.sum()) / (n - t))


def cardinality_function(n: int, t: int) -> RelaxedFunction:
    if not 0 <= t < n:
        raise ValueError(f"cardinality threshold needs 0 <= t < n, got t={t}, n={n}")
    d = float(n - t)
    return RelaxedFunction(
        fn=lambda x: float((n - _row_sum(x)) / d),
        arity=n,
        structure=Structure.AFFINE,
        grad=lambda x: np.full(n, -1.0 / d),
        batch=lambda xs: (n - _row_sum(xs)) / d,
        name=f"cardinality>{t}",
    )


def linear_function(c, offset: float = 0.0, name: str = "linear") -> RelaxedFunction:
    c = np.asarray(c, dtype=float).copy()
    return RelaxedFunction(
        fn=lambda x: float(_row_sum(np.asarray(x, dtype=float) * c) + offset),
        arity=len(c),
        structure=Structure.AFFINE,
        grad=lambda x: c,
        batch=lambda xs: _row_sum(np.asarray(xs, dtype=float) * c) + offset,
        name=name,
    )


def application1_objective(problem: str, inst: GraphInstance) -> RelaxedFunction:
    return linear_function(edge_weights(problem, inst), name=f"{problem}_weights")


def toy_function(c1: float, c2: float) -> RelaxedFunction:
    g1, g2, g3, g4 = toy_coefficients(c1, c2)
    return RelaxedFunction(
        fn=lambda x: g1 * x[0] + g2 * x[1] + g3 * x[0] * x[1] + g4,
        arity=2,
        structure=Structure.AFFINE,
        grad=lambda x: np.array([g1 + g3 * x[1], g2 + g3 * x[0]]),
        batch=lambda xs: g1 * xs[:, 0] + g2 * xs[:, 1] + g3 * xs[:, 0] * xs[:, 1] + g4,
        name="toy",
    )


# ---------------------------------------------------------------- normalization & assembly


@dataclass(frozen=True)
class NormalizationSpec:
    g_min: float
    g_min_plus: float

    def __post_init__(self) -> None:
        if not self.g_min_plus > self.g_min:
            raise ValueError(f"degenerate normalization: g_min_plus={self.g_min_plus} <= g_min={self.g_min}")


def normalize_constraint(g: RelaxedFunction, spec: NormalizationSpec) -> RelaxedFunction:
    span = spec.g_min_plus - spec.g_min
    return g.affine_map(1.0 / span, -spec.g_min / span, name=f"norm({g.name})")


@dataclass(frozen=True)
class PenalizedLoss:
    """l_r(x) = f_r(x) + beta * sum_j g_r^(j)(x).

    ``f_lower_bound`` is a declared lower bound of f over every binary point, feasible or not
    (None if unknown); ``shift`` records a constant already added to f_r to make it nonnegative.
    """

    f_r: RelaxedFunction
    g_rs: tuple[RelaxedFunction, ...]
    beta: float
    f_lower_bound: float | None = None
    shift: float = 0.0
    scope: str | None = None

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        for g in self.g_rs:
            if g.arity != self.f_r.arity:
                raise ValueError(f"arity mismatch: f_r has {self.f_r.arity}, {g.name} has {g.arity}")

    @property
    def arity(self) -> int:
        return self.f_r.arity

    @property
    def g_r(self) -> RelaxedFunction:
        if not self.g_rs:
            return RelaxedFunction.constant(0.0, self.arity, name="no_constraint")
        total = self.g_rs[0]
        for g in self.g_rs[1:]:
            total = total + g
        return total

    @property
    def structure(self) -> Structure:
        s = self.f_r.structure
        for g in self.g_rs:
            s = s.join(g.structure)
        return s

    def g_value(self, x) -> float:
        return float(sum(g(x) for g in self.g_rs))

    def __call__(self, x) -> float:
        return self.f_r(x) + self.beta * self.g_value(x)

    def gradient(self, x) -> np.ndarray:
        grad = self.f_r.gradient(x)
        for g in self.g_rs:
            grad = grad + self.beta * g.gradient(x)
        return grad

    def evaluate_batch(self, xs) -> np.ndarray:
        out = self.f_r.evaluate_batch(xs)
        for g in self.g_rs:
            out = out + self.beta * g.evaluate_batch(xs)
        return out

    def g_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.arity)
        out = np.zeros(len(xs))
        for g in self.g_rs:
            out = out + g.evaluate_batch(xs)
        return out

    def with_functions(self, f_r: RelaxedFunction, g_rs: Sequence[RelaxedFunction]) -> "PenalizedLoss":
        return PenalizedLoss(f_r, tuple(g_rs), self.beta, self.f_lower_bound, self.shift, self.scope)

    def as_function(self) -> RelaxedFunction:
        return RelaxedFunction(
            fn=self.__call__, arity=self.arity, structure=self.structure,
            grad=self.gradient, batch=self.evaluate_batch, name="l_r",
        )


def assemble_penalized(
    f_r: RelaxedFunction,
    g_rs: Sequence[RelaxedFunction],
    beta: float,
    f_lower_bound: float | None = None,
    shift: float = 0.0,
    scope: str | None = None,
) -> PenalizedLoss:
    return PenalizedLoss(f_r, tuple(g_rs), float(beta), f_lower_bound, shift, scope)


# ---------------------------------------------------------------- beta


@dataclass(frozen=True)
class BetaBound:
    value: float
    source: str
    feasible_max: float | None = None
    feasible_min: float | None = None

    def __float__(self) -> float:
        return self.value


def _margin(fmax: float) -> float:
    return max(1.0, 0.01 * abs(fmax))


def beta_bound(
    f=None,
    g=None,
    n: int | None = None,
    *,
    table: BooleanTable | None = None,
    user: float | None = None,
    max_enumerate: int = 20,
) -> BetaBound:
    """A penalty weight above the largest feasible objective value.

    With ``user`` the value passes through.  Otherwise f (a RelaxedFunction, callable
    or BooleanTable) is enumerated over {0,1}^n restricted to g(X) < 1.
    """
    if user is not None:
        return BetaBound(float(user), "user")
    if table is not None:
        f = multilinear_function(table)
        n = table.arity
    if f is None:
        raise ValueError("beta_bound needs a cost oracle, a table or a user bound")
    if isinstance(f, BooleanTable):
        n = f.arity
        f = multilinear_function(f)
    if n is None:
        n = f.arity
    if n > max_enumerate:
        raise ValueError(f"cannot enumerate {n} variables; pass a user bound")
    xs = all_binary(n)
    fv = f.evaluate_batch(xs) if isinstance(f, RelaxedFunction) else np.array([f(x) for x in xs])
    if g is None:
        feasible = np.ones(len(xs), dtype=bool)
    else:
        gv = g.evaluate_batch(xs) if isinstance(g, RelaxedFunction) else np.array([g(x) for x in xs])
        feasible = gv < 1.0
    if not feasible.any():
        raise NoFeasiblePointError(f"no feasible point among the {len(xs)} binary assignments")
    fmax = float(fv[feasible].max())
    fmin = float(fv[feasible].min())
    return BetaBound(fmax + _margin(fmax), "enumeration", fmax, fmin)


# ---------------------------------------------------------------- ablation warp

WARP = 4.5 * math.pi


def badloss_warp(f_r: RelaxedFunction) -> RelaxedFunction:
    """f_r(sin(9 pi x / 2)) entry-wise; equal to f_r at binary inputs, no structure guarantee."""
    f, batch = f_r.fn, f_r.batch

    def fn(x):
        return f(np.sin(WARP * x))

    def g(x):
        return f_r.gradient(np.sin(WARP * x)) * WARP * np.cos(WARP * x)

    return RelaxedFunction(
        fn=fn,
        arity=f_r.arity,
        structure=Structure.UNCONSTRAINED,
        grad=g,
        batch=None if batch is None else (lambda xs: batch(np.sin(WARP * xs))),
        name=f"badloss({f_r.name})",
    )
