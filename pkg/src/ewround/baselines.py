"""Exact oracles and non-learned baselines: enumeration, annealing, a genetic search,
threshold decoding, exact maximum clique and an unconstrained regression proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ewconcave import BooleanTable, RelaxedFunction, Structure, multilinear_function
from .graph import GraphInstance

__all__ = [
    "MAX_BRUTE_FORCE",
    "OracleResult",
    "brute_force",
    "brute_force_recursive",
    "SAConfig",
    "temperature_schedule",
    "simulated_annealing",
    "GAConfig",
    "genetic_algorithm",
    "naive_threshold_round",
    "max_clique",
    "is_clique",
    "MLPConfig",
    "MLPProxy",
    "train_mlp_proxy",
]

MAX_BRUTE_FORCE = 24
CHUNK = 1 << 15


# ---------------------------------------------------------------- exhaustive search


@dataclass(frozen=True)
class OracleResult:
    best_X: np.ndarray | None
    best_value: float
    feasible_count: int
    evaluations: int

    @property
    def feasible(self) -> bool:
        return self.feasible_count > 0


def _batched(f) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, BooleanTable):
        f = multilinear_function(f)
    if isinstance(f, RelaxedFunction) or hasattr(f, "evaluate_batch"):
        return f.evaluate_batch
    return lambda xs: np.array([float(f(x)) for x in xs])


def _chunk_points(start: int, stop: int, n: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(float)


def brute_force(f, g=None, n: int | None = None) -> OracleResult:
    """Exact minimum of f over {X in {0,1}^n : g(X) < 1}, by chunked vectorized enumeration.

    Bit j of the enumeration index is X_j.  Ties keep the lowest index.
    """
    if n is None:
        n = f.arity
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force is capped at {MAX_BRUTE_FORCE} variables, got {n}")
    fb = _batched(f)
    gb = None if g is None else _batched(g)
    total = 1 << n
    best_val, best_idx, count = math.inf, -1, 0
    for start in range(0, total, CHUNK):
        xs = _chunk_points(start, min(total, start + CHUNK), n)
        fv = np.asarray(fb(xs), dtype=float)
        ok = np.ones(len(xs), bool) if gb is None else np.asarray(gb(xs), dtype=float) < 1.0
        count += int(ok.sum())
        if ok.any():
            vals = np.where(ok, fv, math.inf)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best_idx = float(vals[k]), start + k
    if best_idx < 0:
        return OracleResult(None, math.inf, 0, total)
    best = _chunk_points(best_idx, best_idx + 1, n)[0].astype(int)
    return OracleResult(best, best_val, count, total)


def brute_force_recursive(f, g=None, n: int | None = None) -> OracleResult:
    """Depth-first enumeration with scalar evaluations; an independent cross-check of
    :func:`brute_force` (visits X_{n-1} outermost so the first minimum found matches)."""
    if n is None:
        n = f.arity
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force is capped at {MAX_BRUTE_FORCE} variables, got {n}")
    if isinstance(f, BooleanTable):
        table = f
        f = lambda x: table[[int(v) for v in x]]  # noqa: E731
    x = np.zeros(n)
    state = {"best": math.inf, "X": None, "count": 0, "evals": 0}

    def visit(j: int) -> None:
        if j < 0:
            state["evals"] += 1
            if g is not None and not float(g(x)) < 1.0:
                return
            state["count"] += 1
            v = float(f(x))
            if v < state["best"]:
                state["best"], state["X"] = v, x.astype(int).copy()
            return
        for bit in (0.0, 1.0):
            x[j] = bit
            visit(j - 1)
        x[j] = 0.0

    visit(n - 1)
    return OracleResult(state["X"], state["best"], state["count"], state["evals"])


# ---------------------------------------------------------------- simulated annealing


@dataclass(frozen=True)
class SAConfig:
    t_start: float = 1000.0
    cooling: float = 0.99
    t_end: float = 699.0
    jumps: int = 20
    mutation_prob: float = 0.1
    max_levels: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.cooling < 1.0):
            raise ValueError("cooling factor must lie in (0, 1)")
        if self.t_start <= 0 or self.t_end <= 0:
            raise ValueError("temperatures must be positive")


def temperature_schedule(config: SAConfig) -> list[float]:
    """Geometric schedule t_start * cooling^k, stopping once the temperature reaches t_end."""
    temps, t = [], config.t_start
    while t > config.t_end and (config.max_levels is None or len(temps) < config.max_levels):
        temps.append(t)
        t *= config.cooling
    return temps


def simulated_annealing(energy: Callable[[np.ndarray], float], n: int,
                        config: SAConfig = SAConfig(), seed: int = 0) -> np.ndarray:
    """Metropolis search over single-bit flips on a penalized energy; returns the best point seen.

    Each jump flips one random bit and, with ``mutation_prob``, one more.
    """
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=n).astype(float)
    e = float(energy(x))
    best, best_e = x.copy(), e
    for t in temperature_schedule(config):
        for _ in range(config.jumps):
            y = x.copy()
            i = rng.integers(n)
            y[i] = 1.0 - y[i]
            if rng.random() < config.mutation_prob:
                k = rng.integers(n)
                y[k] = 1.0 - y[k]
            ey = float(energy(y))
            if ey <= e or rng.random() < math.exp(-(ey - e) / t):
                x, e = y, ey
                if e < best_e:
                    best, best_e = x.copy(), e
    return best.astype(int)


# ---------------------------------------------------------------- genetic algorithm


@dataclass(frozen=True)
class GAConfig:
    population: int = 256
    generations: int = 100
    crossover_prob: float = 0.6
    mutation_prob: float = 0.01
    elitism: int = 1
    tournament: int = 2

    def __post_init__(self) -> None:
        if self.population < 1:
            raise ValueError("population must be at least 1")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")


def genetic_algorithm(energy_batch: Callable[[np.ndarray], np.ndarray], n: int,
                      config: GAConfig = GAConfig(), seed: int = 0) -> np.ndarray:
    """Generational GA: tournament selection, uniform crossover, bit-flip mutation, elitism.

    ``energy_batch`` maps a (P, n) 0/1 array to P energies; the best individual ever seen
    is returned.
    """
    rng = np.random.default_rng(seed)
    P = config.population
    pop = rng.integers(0, 2, size=(P, n)).astype(float)
    fit = np.asarray(energy_batch(pop), dtype=float)
    k = int(np.argmin(fit))
    best, best_e = pop[k].copy(), fit[k]
    for _ in range(config.generations):
        order = np.argsort(fit, kind="stable")
        elite = pop[order[: config.elitism]]
        m = P - config.elitism
        cand = rng.integers(P, size=(2 * m, config.tournament))
        winners = cand[np.arange(2 * m), np.argmin(fit[cand], axis=1)]
        a, b = pop[winners[:m]], pop[winners[m:]]
        do_cross = rng.random(m) < config.crossover_prob
        mask = rng.random((m, n)) < 0.5
        child = np.where(do_cross[:, None] & mask, b, a)
        flip = rng.random((m, n)) < config.mutation_prob
        child = np.where(flip, 1.0 - child, child)
        pop = np.concatenate([elite, child], axis=0)
        fit = np.asarray(energy_batch(pop), dtype=float)
        k = int(np.argmin(fit))
        if fit[k] < best_e:
            best, best_e = pop[k].copy(), fit[k]
    return best.astype(int)


# ---------------------------------------------------------------- threshold decoding


def naive_threshold_round(x, threshold: float = 0.5) -> np.ndarray:
    """X_i = 1 when x_i >= threshold (the boundary maps to 1)."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("soft values must lie in [0, 1]")
    return (x >= threshold).astype(int)


# ---------------------------------------------------------------- maximum clique


def is_clique(inst: GraphInstance, X) -> bool:
    sel = np.flatnonzero(np.asarray(X) > 0.5)
    A = inst.adjacency()
    sub = A[np.ix_(sel, sel)]
    return bool(np.all(sub + np.eye(len(sel)) > 0))


def max_clique(inst: GraphInstance) -> list[int]:
    """A maximum clique by Bron-Kerbosch with Tomita pivoting (exact)."""
    nbrs = [set(a) for a in inst.neighbors()]
    best: list[int] = []

    def expand(R: list[int], P: set[int], X: set[int]) -> None:
        nonlocal best
        if not P and not X:
            if len(R) > len(best):
                best = list(R)
            return
        if len(R) + len(P) <= len(best):
            return
        pivot = max(P | X, key=lambda u: len(P & nbrs[u]))
        for v in sorted(P - nbrs[pivot]):
            expand(R + [v], P & nbrs[v], X & nbrs[v])
            P = P - {v}
            X = X | {v}

    expand([], set(range(inst.node_count)), set())
    return sorted(best)


# ---------------------------------------------------------------- unconstrained regression proxy


@dataclass(frozen=True)
class MLPConfig:
    hidden: int = 64
    steps: int = 3000
    step_size: float = 1e-2
    batch: int = 256
    seed: int = 0


@dataclass(frozen=True, eq=False)
class MLPProxy:
    """Two-layer tanh network on [configuration features, x]; no structural constraint in x."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    in_mu: np.ndarray
    in_sd: np.ndarray
    y_mu: float
    y_sd: float

    def _inputs(self, c: np.ndarray, xs: np.ndarray) -> np.ndarray:
        c = np.broadcast_to(np.asarray(c, float), (len(xs), len(self.in_mu) - xs.shape[1]))
        return (np.concatenate([c, xs], axis=1) - self.in_mu) / self.in_sd

    def predict(self, c, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, float))
        h = np.tanh(self._inputs(c, xs) @ self.W1 + self.b1)
        return (h @ self.W2 + self.b2) * self.y_sd + self.y_mu

    def function(self, c) -> RelaxedFunction:
        """Bind a configuration; the result is a function of x only."""
        c = np.asarray(c, float)
        d = len(self.in_mu) - len(c)

        def grad(x):
            z = self._inputs(c, x[None, :])
            h = np.tanh(z @ self.W1 + self.b1)
            dz = ((1 - h * h) * self.W2) @ self.W1.T
            return (dz[0, len(c):] / self.in_sd[len(c):]) * self.y_sd

        return RelaxedFunction(
            fn=lambda x: float(self.predict(c, x[None, :])[0]),
            arity=d,
            structure=Structure.UNCONSTRAINED,
            grad=grad,
            batch=lambda xs: self.predict(c, xs),
            name="mlp",
        )


def train_mlp_proxy(C: np.ndarray, X: np.ndarray, y: np.ndarray, config: MLPConfig = MLPConfig()) -> MLPProxy:
    """Least-squares fit of an MLP proxy with Adam; deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    inp = np.concatenate([np.asarray(C, float), np.asarray(X, float)], axis=1)
    mu, sd = inp.mean(axis=0), inp.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    y = np.asarray(y, float)
    ymu, ysd = float(y.mean()), float(y.std()) or 1.0
    Z, T = (inp - mu) / sd, (y - ymu) / ysd
    d, H = Z.shape[1], config.hidden
    params = {
        "W1": rng.normal(scale=1.0 / math.sqrt(d), size=(d, H)),
        "b1": np.zeros(H),
        "W2": rng.normal(scale=1.0 / math.sqrt(H), size=H),
        "b2": np.zeros(1),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    for step in range(1, config.steps + 1):
        idx = rng.choice(len(Z), size=min(config.batch, len(Z)), replace=False)
        z, t = Z[idx], T[idx]
        h = np.tanh(z @ params["W1"] + params["b1"])
        r = h @ params["W2"] + params["b2"][0] - t
        dr = 2.0 * r / len(r)
        dh = np.outer(dr, params["W2"]) * (1 - h * h)
        grads = {"W1": z.T @ dh, "b1": dh.sum(axis=0), "W2": h.T @ dr, "b2": np.array([dr.sum()])}
        for k, gk in grads.items():
            m[k] = 0.9 * m[k] + 0.1 * gk
            v[k] = 0.999 * v[k] + 0.001 * gk * gk
            params[k] -= config.step_size * (m[k] / (1 - 0.9**step)) / (np.sqrt(v[k] / (1 - 0.999**step)) + 1e-8)
    return MLPProxy(params["W1"], params["b1"], params["W2"], float(params["b2"][0]), mu, sd, ymu, ysd)
