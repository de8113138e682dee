import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ewround.ewconcave import BooleanTable, multilinear_function
from ewround.graph import GraphInstance, erdos_renyi, single_edge
from ewround.objectives import assemble_penalized, edge_cover_function, linear_function, node_matching_function, toy_function
from ewround.pipeline import _clique_exact
from ewround.baselines import (
    MAX_BRUTE_FORCE,
    GAConfig,
    MLPConfig,
    SAConfig,
    brute_force,
    brute_force_recursive,
    genetic_algorithm,
    is_clique,
    max_clique,
    naive_threshold_round,
    simulated_annealing,
    temperature_schedule,
    train_mlp_proxy,
)

K3 = GraphInstance(3, ((0, 1), (1, 2), (0, 2)), np.zeros((3, 1)))
PATH3 = GraphInstance(3, ((0, 1), (1, 2)), np.zeros((3, 1)))


def _toy_loss():
    f = toy_function(33, 33)
    return assemble_penalized(f, [], 80.0)


# ---------------------------------------------------------------- oracle


def test_oracle_examples():
    f, g = _clique_exact(K3)
    r = brute_force(f, g, 3)
    assert r.best_X.tolist() == [1, 1, 1] and r.best_value == -3
    r = brute_force(linear_function([1.0, 1.0]), node_matching_function(PATH3))
    assert r.feasible_count == 0 and r.best_X is None and not r.feasible
    r = brute_force(toy_function(33, 33))
    assert r.best_X.tolist() == [0, 0] and r.best_value == pytest.approx(50.0)
    assert r.evaluations == 4 and r.feasible_count == 4


def test_oracle_limits():
    with pytest.raises(ValueError):
        brute_force(lambda x: 0.0, None, MAX_BRUTE_FORCE + 1)
    with pytest.raises(ValueError):
        brute_force_recursive(lambda x: 0.0, None, MAX_BRUTE_FORCE + 1)


def test_oracle_accepts_tables():
    t = BooleanTable(2, [3.0, -1.0, 2.0, 0.5])
    assert brute_force(t).best_X.tolist() == [1, 0]
    assert brute_force_recursive(t).best_value == -1.0


@given(st.integers(1, 8), st.integers(0, 10**6))
def test_two_oracles_agree(n, seed):
    rng = np.random.default_rng(seed)
    f = multilinear_function(BooleanTable(n, rng.integers(-20, 20, size=2**n).astype(float)))
    g = multilinear_function(BooleanTable(n, rng.uniform(0, 2, size=2**n)))
    a, b = brute_force(f, g, n), brute_force_recursive(f, g, n)
    assert a.feasible_count == b.feasible_count
    if a.feasible:
        assert a.best_value == b.best_value
        assert g(a.best_X) < 1 and g(b.best_X) < 1


def test_ties_go_to_the_lowest_index():
    r = brute_force(lambda x: 0.0, None, 3)
    assert r.best_X.tolist() == [0, 0, 0]


def test_max_clique_against_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        inst = erdos_renyi(int(rng.integers(1, 11)), float(rng.uniform(0.1, 0.9)), rng)
        best = max_clique(inst)
        X = np.zeros(inst.node_count)
        X[best] = 1
        assert is_clique(inst, X)
        f, g = _clique_exact(inst)
        k = len(best)
        assert brute_force(f, g, inst.node_count).best_value == -k * (k - 1) / 2


# ---------------------------------------------------------------- annealing


def test_schedule_levels():
    temps = temperature_schedule(SAConfig())
    assert len(temps) == math.ceil(math.log(699 / 1000) / math.log(0.99)) == 36
    assert temps[0] == 1000 and temps[-1] > 699
    assert len(temperature_schedule(SAConfig(max_levels=5))) == 5
    with pytest.raises(ValueError):
        SAConfig(cooling=1.0)


def test_sa_zero_iterations_returns_initial_point():
    x0 = np.random.default_rng(3).integers(0, 2, size=6)
    assert simulated_annealing(lambda x: 0.0, 6, SAConfig(max_levels=0), seed=3).tolist() == x0.tolist()


def test_sa_finds_toy_optimum():
    L = _toy_loss()
    for seed in range(10):
        assert simulated_annealing(L, 2, SAConfig(), seed).tolist() == [0, 0]


def test_sa_deterministic():
    L = assemble_penalized(linear_function(np.arange(-4.0, 4.0)), [], 1.0)
    assert simulated_annealing(L, 8, seed=5).tolist() == simulated_annealing(L, 8, seed=5).tolist()


# ---------------------------------------------------------------- genetic


def test_ga_single_edge_cover():
    e = single_edge(4, 9)
    L = assemble_penalized(linear_function([5.0]), [edge_cover_function(e)], 6.0)
    assert genetic_algorithm(L.evaluate_batch, 1, GAConfig(generations=1)).tolist() == [1]


def test_ga_toy_success_rate():
    L = _toy_loss()
    hits = sum(genetic_algorithm(L.evaluate_batch, 2, GAConfig(), seed).tolist() == [0, 0] for seed in range(100))
    assert hits >= 99


def test_ga_population_one_unchanged():
    x0 = np.random.default_rng(2).integers(0, 2, size=(1, 5))[0]
    cfg = GAConfig(population=1, crossover_prob=0.0, mutation_prob=0.0, elitism=0)
    out = genetic_algorithm(lambda X: X.sum(axis=1), 5, cfg, seed=2)
    assert out.tolist() == x0.tolist()


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GAConfig(population=0)
    with pytest.raises(ValueError):
        GAConfig(population=2, elitism=3)


# ---------------------------------------------------------------- threshold


def test_naive_threshold():
    assert naive_threshold_round([0.3, 0.7]).tolist() == [0, 1]
    assert naive_threshold_round([0.5, 0.49]).tolist() == [1, 0]
    with pytest.raises(ValueError):
        naive_threshold_round([1.2])


def test_naive_can_break_feasibility_where_rounding_does_not():
    from ewround.solver import sequential_round

    cover = edge_cover_function(PATH3)
    L = assemble_penalized(linear_function([1.0, 1.0]), [cover], 3.0)
    x = np.full(2, 0.4)
    assert cover(naive_threshold_round(x)) >= 1
    assert sequential_round(L, x).feasible


# ---------------------------------------------------------------- mlp


def test_mlp_proxy_fits_and_is_differentiable():
    rng = np.random.default_rng(0)
    C = rng.uniform(0, 1, size=(400, 2))
    X = rng.integers(0, 2, size=(400, 2)).astype(float)
    y = C[:, 0] * X[:, 0] + C[:, 1] * X[:, 1]
    m = train_mlp_proxy(C, X, y, MLPConfig(steps=1500))
    assert np.mean((m.predict(C, X) - y) ** 2) < 1e-2
    f = m.function(C[0])
    x = np.array([0.3, 0.6])
    h = 1e-6
    fd = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(f.gradient(x), fd, atol=1e-6)
