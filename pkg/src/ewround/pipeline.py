"""Problem specifications and the end-to-end solve: bound beta, assemble l_r, optimize the
soft assignment, round it, and check the guarantee."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ewconcave import RelaxedFunction
from .graph import GraphInstance
from .objectives import (
    BetaBound,
    NormalizationSpec,
    PenalizedLoss,
    _margin,
    all_binary,
    application1_objective,
    assemble_penalized,
    badloss_warp,
    beta_bound,
    cardinality_function,
    clique_number_upper_bound,
    edge_cover_function,
    linear_function,
    maxclique_relaxation,
    node_matching_function,
    normalize_constraint,
    toy_function,
)
from .proxy import ProxyParams, proxy_function
from .solver import ORDERS, OptimizeConfig, SolveResult, optimize_relaxed, sequential_round, verify_guarantee

__all__ = [
    "PROBLEM_KINDS",
    "ProblemSpec",
    "BuiltProblem",
    "build_problem",
    "load_problem",
    "solve",
]

PROBLEM_KINDS = ("maxclique", "edge_cover", "node_matching", "cardinality", "proxy", "toy")
CONSTRAINT_NAMES = ("edge_cover", "node_matching", "cardinality")
# largest arity at which beta and the feasible minimum of f are found by enumeration
ENUMERATE_LIMIT = 20

_SCOPES = {"maxclique": "node", "edge_cover": "edge", "node_matching": "edge", "cardinality": "node", "toy": "node"}
_WEIGHTS = {"edge_cover": "cover", "node_matching": "match"}


@dataclass(frozen=True)
class ProblemSpec:
    """What to solve on an instance.

    ``objective`` is ``"exact"`` (closed form) or ``"proxy"`` (a trained checkpoint).
    ``constraints`` lists extra constraint names for the ``proxy`` kind.
    ``shift`` lifts f so its minimum over all binary points is nonnegative when that minimum is known.
    """

    kind: str
    beta: float | None = None
    t: int | None = None
    normalization: NormalizationSpec | None = None
    objective: str = "exact"
    weights: str | None = None
    constraints: tuple[str, ...] = ()
    shift: bool = True
    badloss: bool = False
    order: str = "by_confidence"
    baseline: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.objective not in ("exact", "proxy"):
            raise ValueError(f"objective must be 'exact' or 'proxy', got {self.objective!r}")
        if self.kind == "proxy" and self.objective != "proxy":
            object.__setattr__(self, "objective", "proxy")
        if self.order not in ORDERS:
            raise ValueError(f"unknown rounding order {self.order!r}; expected one of {ORDERS}")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        for c in self.constraints:
            if c not in CONSTRAINT_NAMES:
                raise ValueError(f"unknown constraint {c!r}; expected one of {CONSTRAINT_NAMES}")

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        d = dict(d)
        norm = d.pop("normalization", None)
        if norm is not None:
            d["normalization"] = NormalizationSpec(float(norm["g_min"]), float(norm["g_min_plus"]))
        if "constraints" in d:
            d["constraints"] = tuple(d["constraints"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown problem fields {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constraints"] = list(self.constraints)
        return d


def load_problem(text_or_path: str) -> ProblemSpec:
    """A problem from a JSON file, an inline JSON object, or a bare kind name."""
    p = Path(text_or_path)
    if p.suffix == ".json" or p.is_file():
        return ProblemSpec.from_dict(json.loads(p.read_text()))
    s = text_or_path.strip()
    if s.startswith("{"):
        return ProblemSpec.from_dict(json.loads(s))
    return ProblemSpec(kind=s)


@dataclass
class BuiltProblem:
    spec: ProblemSpec
    loss: PenalizedLoss
    scope: str
    beta: BetaBound
    exact_f: Callable | None
    exact_g: Callable | None
    feasible_set_empty: bool = False

    @property
    def n(self) -> int:
        return self.loss.arity

    def true_objective(self, X) -> float:
        """Objective of a binary point in the caller's frame (no shift)."""
        X = np.asarray(X, dtype=float)
        if self.exact_f is not None:
            return float(self.exact_f(X))
        return self.loss.f_r(X) - self.loss.shift

    def constraint(self, X) -> float:
        X = np.asarray(X, dtype=float)
        return float(self.exact_g(X)) if self.exact_g is not None else self.loss.g_value(X)


def _clique_exact(inst: GraphInstance):
    edges = set(inst.edges)

    def f(X):
        sel = np.flatnonzero(X > 0.5).tolist()
        return -float(sum((a, b) in edges for i, a in enumerate(sel) for b in sel[i + 1:]))

    def g(X):
        sel = np.flatnonzero(X > 0.5).tolist()
        return float(sum((a, b) not in edges for i, a in enumerate(sel) for b in sel[i + 1:]))

    return f, g


def _constraint(name: str, inst: GraphInstance, spec: ProblemSpec, n: int) -> RelaxedFunction:
    if name == "edge_cover":
        return edge_cover_function(inst)
    if name == "node_matching":
        return node_matching_function(inst)
    t = spec.t if spec.t is not None else 0
    if spec.normalization is None:
        return cardinality_function(n, t)
    raw = linear_function(-np.ones(n), offset=float(n), name="unselected")
    return normalize_constraint(raw, spec.normalization)


def _objective(spec: ProblemSpec, inst: GraphInstance, proxy: ProxyParams | None) -> tuple[RelaxedFunction, Callable | None]:
    if spec.objective == "proxy":
        if proxy is None:
            raise ValueError(f"problem {spec.kind!r} with a proxy objective needs a checkpoint")
        return proxy_function(proxy, inst), None
    if spec.kind in _WEIGHTS:
        f = application1_objective(spec.weights or _WEIGHTS[spec.kind], inst)
        return f, f
    if spec.kind == "cardinality":
        f = linear_function(inst.node_attrs[:, 0], name="node_weights")
        return f, f
    if spec.kind == "toy":
        if inst.node_count != 2:
            raise ValueError("the toy problem needs a two-node instance carrying (C1, C2)")
        c1, c2 = inst.node_attrs[:, 0]
        f = toy_function(c1, c2)
        return f, f
    raise ValueError(f"problem {spec.kind!r} has no exact objective")


def _enumerate_feasible(f: RelaxedFunction, gs: list[RelaxedFunction], n: int):
    xs = all_binary(n)
    fv = f.evaluate_batch(xs)
    gv = np.zeros(len(xs))
    for g in gs:
        gv = gv + g.evaluate_batch(xs)
    return fv, gv < 1.0


def build_problem(spec: ProblemSpec, inst: GraphInstance, proxy: ProxyParams | None = None) -> BuiltProblem:
    """Assemble the penalized loss for ``spec`` on ``inst`` with beta and the shift chosen."""
    if spec.kind == "maxclique":
        return _build_clique(spec, inst)
    scope = proxy.scope if (spec.kind == "proxy" and proxy is not None) else _SCOPES.get(spec.kind, "node")
    f_r, exact_f = _objective(spec, inst, proxy)
    n = f_r.arity
    names = list(spec.constraints)
    if spec.kind in ("edge_cover", "node_matching", "cardinality"):
        names = [spec.kind] + [c for c in names if c != spec.kind]
    g_rs = [_constraint(c, inst, spec, n) for c in names]
    if spec.badloss:
        f_r = badloss_warp(f_r)
    exact_g = None
    if g_rs:
        gsum = g_rs[0]
        for g in g_rs[1:]:
            gsum = gsum + g
        exact_g = gsum

    empty = False
    shift = 0.0
    lower = None
    if n <= ENUMERATE_LIMIT:
        fv, ok = _enumerate_feasible(f_r, g_rs, n)
        empty = not ok.any()
        lower = float(fv.min())
        if spec.shift and lower < 0:
            shift = -lower
            lower = 0.0
    if shift:
        f_r = f_r.shifted(shift)
    if spec.beta is not None:
        beta = BetaBound(float(spec.beta), "user")
    elif n <= ENUMERATE_LIMIT and not empty:
        beta = beta_bound(f_r, exact_g, n)
    elif n <= ENUMERATE_LIMIT:
        # nothing is feasible: beta is only needed to run the pipeline and report infeasibility
        fmax = float(fv.max()) + shift
        beta = BetaBound(fmax + _margin(fmax), "no-feasible-point", None, None)
    elif spec.objective == "exact" and spec.kind in ("edge_cover", "node_matching", "cardinality"):
        c = f_r.gradient(np.zeros(n))
        fmax = float(np.clip(c, 0, None).sum())
        beta = BetaBound(fmax + _margin(fmax), "weight-sum", fmax, None)
        lower = float(np.clip(c, None, 0).sum())
    else:
        raise ValueError(f"{n} variables is too many to enumerate; pass beta explicitly")
    loss = assemble_penalized(f_r, g_rs, beta.value, f_lower_bound=lower, shift=shift, scope=scope)
    return BuiltProblem(spec, loss, scope, beta, exact_f, exact_g, empty)


def _build_clique(spec: ProblemSpec, inst: GraphInstance) -> BuiltProblem:
    f_r, g_r = maxclique_relaxation(inst)
    if spec.badloss:
        f_r, g_r = badloss_warp(f_r), badloss_warp(g_r)
    # f = -(edges inside the selection) is smallest, at -|E|, when every node is selected
    worst = float(inst.edge_count)
    shift = worst if spec.shift else 0.0
    if shift:
        f_r = f_r.shifted(shift)
    # the empty set and singletons are cliques with f = 0, the feasible maximum
    fmax = shift
    omega_ub = clique_number_upper_bound(inst)
    beta = BetaBound(float(spec.beta), "user") if spec.beta is not None else BetaBound(
        fmax + _margin(fmax), "clique-bound", fmax, shift - omega_ub * (omega_ub - 1) / 2.0)
    loss = assemble_penalized(f_r, [g_r], beta.value, f_lower_bound=shift - worst, shift=shift, scope="node")
    ef, eg = _clique_exact(inst)
    return BuiltProblem(spec, loss, "node", beta, ef, eg, False)


def solve(
    spec: ProblemSpec,
    inst: GraphInstance,
    config: OptimizeConfig = OptimizeConfig(),
    proxy: ProxyParams | None = None,
    concavity_trials: int = 200,
    built: BuiltProblem | None = None,
) -> SolveResult:
    """Bound beta, assemble l_r, optimize the soft point, round it and check the guarantee."""
    built = built or build_problem(spec, inst, proxy)
    soft = optimize_relaxed(built.loss, config, scope=built.scope)
    result = sequential_round(built.loss, soft, spec.order)
    # the guarantee speaks about the function being relaxed; proxies are judged on themselves
    exact_f = built.exact_f if spec.objective == "exact" and not spec.badloss else None
    verify_guarantee(result, built.loss, exact_f, built.exact_g, concavity_trials)
    result.notes.update({
        "kind": spec.kind,
        "beta_source": built.beta.source,
        "feasible_set_empty": built.feasible_set_empty,
    })
    return result

