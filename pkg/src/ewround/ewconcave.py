"""Multilinear extensions, entry-wise concavity checks and the two-variable rectifier form."""

from __future__ import annotations

import enum
import itertools
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Structure",
    "RelaxedFunction",
    "BooleanTable",
    "ConcavityReport",
    "Prop1Params",
    "MAX_ARITY",
    "multilinear_eval",
    "multilinear_eval_explicit",
    "multilinear_gradient",
    "multilinear_function",
    "check_entrywise_concave",
    "check_entrywise_affine",
    "prop1_construct",
    "relu",
]

MAX_ARITY = 20


def relu(z):
    return np.maximum(z, 0.0)


class Structure(str, enum.Enum):
    AFFINE = "affine"
    CONCAVE = "concave"
    UNCONSTRAINED = "unconstrained"

    def join(self, other: "Structure") -> "Structure":
        """Structure class of a sum of two functions."""
        if Structure.UNCONSTRAINED in (self, other):
            return Structure.UNCONSTRAINED
        if Structure.CONCAVE in (self, other):
            return Structure.CONCAVE
        return Structure.AFFINE

    def scaled(self, a: float) -> "Structure":
        if self is Structure.AFFINE or a == 0:
            return Structure.AFFINE
        if a > 0:
            return self
        return Structure.UNCONSTRAINED


@dataclass(frozen=True)
class RelaxedFunction:
    """A differentiable map [0,1]^n -> R with a declared structure class.

    ``grad`` and ``batch`` are optional fast paths; without ``grad`` the
    gradient falls back to central differences.
    """

    fn: Callable[[np.ndarray], float]
    arity: int
    structure: Structure
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arity,):
            raise ValueError(f"{self.name or 'function'} expects {self.arity} inputs, got shape {x.shape}")
        return float(self.fn(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        h = 1e-6
        g = np.empty(self.arity)
        for i in range(self.arity):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (self.fn(xp) - self.fn(xm)) / (2 * h)
        return g

    def evaluate_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.arity)
        if self.batch is not None:
            return np.asarray(self.batch(xs), dtype=float).reshape(-1)
        return np.array([self.fn(x) for x in xs])

    def shifted(self, c: float) -> "RelaxedFunction":
        return self.affine_map(1.0, c)

    def affine_map(self, a: float, c: float, name: str | None = None) -> "RelaxedFunction":
        """x -> a * f(x) + c."""
        f, g, b = self.fn, self.grad, self.batch
        return RelaxedFunction(
            fn=lambda x: a * f(x) + c,
            arity=self.arity,
            structure=self.structure.scaled(a),
            grad=None if g is None else (lambda x: a * g(x)),
            batch=None if b is None else (lambda xs: a * b(xs) + c),
            name=name or self.name,
        )

    def __add__(self, other: "RelaxedFunction") -> "RelaxedFunction":
        if other.arity != self.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")
        f1, f2 = self.fn, other.fn
        grad = None
        if self.grad is not None and other.grad is not None:
            g1, g2 = self.grad, other.grad
            grad = lambda x: g1(x) + g2(x)  # noqa: E731
        batch = None
        if self.batch is not None and other.batch is not None:
            b1, b2 = self.batch, other.batch
            batch = lambda xs: b1(xs) + b2(xs)  # noqa: E731
        return RelaxedFunction(
            fn=lambda x: f1(x) + f2(x),
            arity=self.arity,
            structure=self.structure.join(other.structure),
            grad=grad,
            batch=batch,
            name=f"{self.name}+{other.name}",
        )

    @staticmethod
    def constant(value: float, arity: int, name: str = "const") -> "RelaxedFunction":
        return RelaxedFunction(
            fn=lambda x: value,
            arity=arity,
            structure=Structure.AFFINE,
            grad=lambda x: np.zeros(arity),
            batch=lambda xs: np.full(len(xs), value, dtype=float),
            name=name,
        )


# ---------------------------------------------------------------- boolean tables


@dataclass(frozen=True, eq=False)
class BooleanTable:
    """Explicit h: {0,1}^n -> R; entry k holds h(X) with X_j = bit j of k (x_0 is the LSB)."""

    arity: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if not 0 <= self.arity <= MAX_ARITY:
            raise ValueError(f"table arity must be in [0, {MAX_ARITY}], got {self.arity}")
        vals = np.array(self.values, dtype=float).reshape(-1)
        if len(vals) != 2**self.arity:
            raise ValueError(f"table of arity {self.arity} needs {2**self.arity} values, got {len(vals)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("table values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @staticmethod
    def index_of(x: Sequence[int]) -> int:
        return int(sum(int(b) << j for j, b in enumerate(x)))

    @classmethod
    def from_function(cls, h: Callable[[tuple[int, ...]], float], arity: int) -> "BooleanTable":
        vals = np.empty(2**arity)
        for k in range(2**arity):
            vals[k] = h(tuple((k >> j) & 1 for j in range(arity)))
        return cls(arity, vals)

    def __getitem__(self, x: Sequence[int]) -> float:
        return float(self.values[self.index_of(x)])

    def vertices(self) -> np.ndarray:
        """All points of {0,1}^n in table order, shape (2^n, n)."""
        k = np.arange(2**self.arity)
        return ((k[:, None] >> np.arange(self.arity)[None, :]) & 1).astype(float)

    def dumps(self) -> str:
        return "\n".join([str(self.arity)] + [repr(float(v)) for v in self.values]) + "\n"

    @classmethod
    def loads(cls, text: str) -> "BooleanTable":
        tokens = text.split()
        if not tokens:
            raise ValueError("empty table text")
        n = int(tokens[0])
        return cls(n, np.array([float(t) for t in tokens[1:]]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "BooleanTable":
        return cls.loads(Path(path).read_text())


def _check_point(table: BooleanTable, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) != table.arity:
        raise ValueError(f"point has {len(x)} entries, table arity is {table.arity}")
    return x


def multilinear_eval(table: BooleanTable, x) -> float:
    """Multilinear extension by contracting one coordinate at a time, O(2^n)."""
    x = _check_point(table, x)
    v = table.values
    for xj in x:
        v = v.reshape(-1, 2)
        v = v[:, 0] * (1.0 - xj) + v[:, 1] * xj
    return float(v[0])


def multilinear_eval_explicit(table: BooleanTable, x) -> float:
    """Direct vertex-weighted sum with 0^0 = 1; the independent oracle for the fast path."""
    x = _check_point(table, x)
    bits = table.vertices()
    # x^X (1-x)^(1-X) with X binary is a select, which also fixes 0^0 = 1.
    weights = np.where(bits == 1.0, x[None, :], 1.0 - x[None, :]).prod(axis=1)
    return float(weights @ table.values)


def multilinear_gradient(table: BooleanTable, x) -> np.ndarray:
    x = _check_point(table, x)
    g = np.empty(table.arity)
    for i in range(table.arity):
        hi, lo = x.copy(), x.copy()
        hi[i], lo[i] = 1.0, 0.0
        g[i] = multilinear_eval(table, hi) - multilinear_eval(table, lo)
    return g


# cap on batch * 2^n floats held at once by the batched contraction
BATCH_CELLS = 1 << 22


def _contract(values: np.ndarray, xs: np.ndarray) -> np.ndarray:
    v = np.broadcast_to(values, (len(xs), len(values)))
    for j in range(xs.shape[1]):
        v = v.reshape(len(xs), -1, 2)
        xj = xs[:, j][:, None]
        v = v[:, :, 0] * (1.0 - xj) + v[:, :, 1] * xj
    return v.reshape(len(xs))


def _multilinear_batch(table: BooleanTable, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if np.all((xs == 0.0) | (xs == 1.0)):
        # vertices are table entries; the contraction would return them exactly anyway
        idx = (xs.astype(np.int64) << np.arange(table.arity, dtype=np.int64)).sum(axis=1)
        return table.values[idx].copy()
    step = max(1, BATCH_CELLS >> table.arity)
    return np.concatenate([_contract(table.values, xs[i:i + step]) for i in range(0, len(xs), step)] or [np.zeros(0)])


def multilinear_function(table: BooleanTable, name: str = "multilinear") -> RelaxedFunction:
    return RelaxedFunction(
        fn=lambda x: multilinear_eval(table, x),
        arity=table.arity,
        structure=Structure.AFFINE,
        grad=lambda x: multilinear_gradient(table, x),
        batch=lambda xs: _multilinear_batch(table, xs),
        name=name,
    )


# ---------------------------------------------------------------- concavity checks


@dataclass(frozen=True)
class ConcavityReport:
    passed: bool
    witness: dict | None = None
    trials: int = 0

    def __bool__(self) -> bool:
        return self.passed


def _as_callable(f) -> Callable[[np.ndarray], float]:
    return f if callable(f) else (lambda x: float(f(x)))


def _sample_segments(n: int, trials: int, rng: np.random.Generator):
    for _ in range(trials):
        x = rng.random(n)
        i = int(rng.integers(n))
        a, b = rng.random(2)
        # Endpoints of the box are where warped or kinked relaxations misbehave most.
        if rng.random() < 0.25:
            a = float(rng.integers(2))
        if rng.random() < 0.25:
            b = float(rng.integers(2))
        gamma = float(rng.random())
        yield x, i, float(a), float(b), gamma


def _check(f, n: int, trials: int, tol: float, seed, two_sided: bool) -> ConcavityReport:
    if trials <= 0:
        raise ValueError("trials must be positive")
    fn = _as_callable(f)
    rng = np.random.default_rng(seed)
    for x, i, a, b, gamma in _sample_segments(n, trials, rng):
        xa, xb, xm = x.copy(), x.copy(), x.copy()
        xa[i], xb[i] = a, b
        xm[i] = gamma * a + (1.0 - gamma) * b
        chord = gamma * fn(xa) + (1.0 - gamma) * fn(xb)
        mid = fn(xm)
        gap = chord - mid
        if gap > tol or (two_sided and -gap > tol):
            return ConcavityReport(
                passed=False,
                witness={
                    "x": xa.tolist(),
                    "x_prime": xb.tolist(),
                    "coordinate": i,
                    "gamma": gamma,
                    "gap": float(abs(gap)),
                },
                trials=trials,
            )
    return ConcavityReport(passed=True, trials=trials)


def check_entrywise_concave(f, n: int, trials: int = 1000, tol: float = 1e-8, seed=0) -> ConcavityReport:
    """Sample one-coordinate chords and look for a point below the chord.

    A pass is a probabilistic certificate only.
    """
    return _check(f, n, trials, tol, seed, two_sided=False)


def check_entrywise_affine(f, n: int, trials: int = 1000, tol: float = 1e-8, seed=0) -> ConcavityReport:
    return _check(f, n, trials, tol, seed, two_sided=True)


# ---------------------------------------------------------------- rectifier construction


@dataclass(frozen=True)
class Prop1Params:
    """h_r(x) = w00 - sum_i relu(w_i1 y_0 + w_i2 y_1 + w_i0), with y_j = 1 - x_j if flips[j] else x_j."""

    w00: float
    forms: np.ndarray  # rows (w_i1, w_i2, w_i0)
    flips: tuple[bool, bool]
    exact_forms: tuple[tuple[Fraction, Fraction, Fraction], ...] | None = None

    def __call__(self, x) -> float:
        y = self._flip(np.asarray(x, dtype=float))
        z = self.forms[:, 0] * y[0] + self.forms[:, 1] * y[1] + self.forms[:, 2]
        return float(self.w00 - relu(z).sum())

    def evaluate_exact(self, x) -> Fraction:
        """The same form in rational arithmetic; floats convert to Fractions without loss."""
        if self.exact_forms is None:
            raise ValueError("no exact coefficients recorded")
        y = [Fraction(1) - Fraction(float(v)) if f else Fraction(float(v)) for v, f in zip(x, self.flips)]
        total = Fraction(self.w00)
        for w1, w2, w0 in self.exact_forms:
            total -= max(Fraction(0), w1 * y[0] + w2 * y[1] + w0)
        return total

    def _flip(self, x: np.ndarray) -> np.ndarray:
        return np.array([1.0 - x[j] if self.flips[j] else x[j] for j in range(2)])

    def as_function(self) -> RelaxedFunction:
        return RelaxedFunction(fn=self.__call__, arity=2, structure=Structure.CONCAVE, name="prop1")


def prop1_construct(table: BooleanTable) -> Prop1Params:
    """Build the three-rectifier concave form matching a 2-variable table at all vertices.

    The largest vertex value is moved to (0, 0) by flipping coordinates.
    """
    if table.arity != 2:
        raise ValueError(f"rectifier construction needs arity 2, got {table.arity}")
    h = {(p, q): table[(p, q)] for p, q in itertools.product((0, 1), repeat=2)}
    p, q = max(h, key=lambda k: (h[k], -k[0], -k[1]))
    # a0 = h(0,0), a1 = h(0,1), a2 = h(1,0), a3 = h(1,1) in flipped coordinates
    a0 = h[(p, q)]
    a1 = h[(p, 1 - q)]
    a2 = h[(1 - p, q)]
    a3 = h[(1 - p, 1 - q)]
    forms = np.array(
        [
            [-(a0 - a1), a0 - a1, 0.0],
            [a0 - a2, -(a0 - a2), 0.0],
            [a0 - a3, a0 - a3, -(a0 - a3)],
        ]
    )
    e0, e1, e2, e3 = (Fraction(v) for v in (a0, a1, a2, a3))
    exact = (
        (-(e0 - e1), e0 - e1, Fraction(0)),
        (e0 - e2, -(e0 - e2), Fraction(0)),
        (e0 - e3, e0 - e3, -(e0 - e3)),
    )
    return Prop1Params(w00=a0, forms=forms, flips=(bool(p), bool(q)), exact_forms=exact)
