import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from storagemix.moga import (
    GaConfig,
    Individual,
    Population,
    crowding_distance,
    dominates,
    evolve,
    first_front,
    hypervolume,
    non_dominated_sort,
    optimize,
    polynomial_mutation,
    sbx,
    select_compromise,
)


class Fn:
    """Vectorised objective wrapped as a model."""

    def __init__(self, f):
        self.f = f

    def predict(self, X):
        return self.f(np.atleast_2d(X))


def _sphere(X):
    return ((X - 0.5) ** 2).sum(axis=1)


def _brute_fronts(F):
    left = list(range(len(F)))
    fronts = []
    while left:
        front = [i for i in left if not any(dominates(F[j], F[i]) for j in left if j != i)]
        fronts.append(sorted(front))
        left = [i for i in left if i not in front]
    return fronts


# ---------------------------------------------------------------- sorting


def test_sort_small_example():
    fronts = non_dominated_sort([[1, 2], [2, 1], [3, 3]])
    assert [sorted(f.tolist()) for f in fronts] == [[0, 1], [2]]


def test_sort_single_point():
    assert [f.tolist() for f in non_dominated_sort([[4.0, 2.0]])] == [[0]]


@pytest.mark.parametrize("seed", range(3))
def test_sort_matches_brute_force_500_points(seed):
    F = np.random.default_rng(seed).random((500, 4))
    fronts = [sorted(f.tolist()) for f in non_dominated_sort(F)]
    assert fronts == _brute_fronts(F)
    assert first_front(F).tolist() == fronts[0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 4), st.integers(0, 10_000))
def test_sort_matches_brute_force_with_ties(n, m, seed):
    F = np.random.default_rng(seed).integers(0, 4, size=(n, m)).astype(float)
    assert [sorted(f.tolist()) for f in non_dominated_sort(F)] == _brute_fronts(F)


def test_sort_rejects_nan():
    with pytest.raises(ValueError):
        non_dominated_sort([[np.nan, 1.0]])


def test_crowding_extremes_infinite():
    d = crowding_distance(np.array([[0, 3], [1, 2], [2, 1], [3, 0]], dtype=float))
    assert np.isinf(d[0]) and np.isinf(d[3]) and np.all(np.isfinite(d[1:3]))

# ---------------------------------------------------------------- operators


def test_operators_off_return_parents():
    rng = np.random.default_rng(0)
    lo, hi = np.zeros(5), np.ones(5)
    p1, p2 = rng.random(5), rng.random(5)
    c1, c2 = sbx(p1, p2, lo, hi, 15.0, 0.0, rng)
    assert np.array_equal(c1, p1) and np.array_equal(c2, p2)
    assert np.array_equal(polynomial_mutation(p1, lo, hi, 20.0, 0.0, rng), p1)


def test_no_variation_keeps_population():
    rng = np.random.default_rng(0)
    lo, hi = np.zeros(3), np.ones(3)
    X = rng.random((8, 3))
    pop = Population(X, _sphere(X)[:, None])
    cfg = GaConfig(population_size=8, crossover_prob=0.0, mutation_prob=0.0)
    new = evolve(pop, lo, hi, cfg, lambda Z: _sphere(Z)[:, None], rng, max_rounds=3)
    assert sorted(map(tuple, new.X)) == sorted(map(tuple, X))


def test_clones_of_optimum():
    lo, hi = np.zeros(4), np.ones(4)
    X = np.full((10, 4), 0.5)
    ev = lambda Z: _sphere(Z)[:, None]  # noqa: E731
    rng = np.random.default_rng(1)
    frozen = evolve(Population(X, ev(X)), lo, hi, GaConfig(population_size=10, mutation_prob=0.0), ev, rng,
                    max_rounds=3)
    assert np.all(frozen.F == 0.0)
    pop = Population(X, ev(X))
    for _ in range(20):
        pop = evolve(pop, lo, hi, GaConfig(population_size=10, mutation_prob=0.2), ev, rng)
        assert pop.F.min() == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 100.0), st.floats(1.0, 100.0))
def test_operators_stay_in_bounds(seed, eta_c, eta_m):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 0, size=6)
    hi = lo + rng.uniform(0, 3, size=6)
    hi[0] = lo[0]  # one collapsed dimension
    p1 = lo + rng.random(6) * (hi - lo)
    p2 = lo + rng.random(6) * (hi - lo)
    c1, c2 = sbx(p1, p2, lo, hi, eta_c, 1.0, rng)
    for c in (c1, c2, polynomial_mutation(c1, lo, hi, eta_m, 1.0, rng)):
        assert np.all(c >= lo) and np.all(c <= hi)

# ---------------------------------------------------------------- optimizer


@pytest.mark.parametrize("seed", range(5))
def test_coincident_objectives_converge(seed):
    models = [Fn(_sphere), Fn(_sphere)]
    res = optimize(models, np.zeros(6), np.ones(6), GaConfig(seed=seed))
    assert res.front.F.min() <= 1e-2


def test_genes_in_bounds_every_generation():
    rng = np.random.default_rng(0)
    lo = np.array([0.0, -2.0, 10.0, 5.0])
    hi = np.array([1.0, 2.0, 20.0, 5.0])
    ev = lambda Z: np.column_stack([Z[:, 0] + Z[:, 1], -Z[:, 2] + Z[:, 1] ** 2])  # noqa: E731
    X = lo + rng.random((12, 4)) * (hi - lo)
    pop = Population(X, ev(X))
    cfg = GaConfig(population_size=12, crossover_prob=1.0, mutation_prob=0.5)
    for _ in range(50):
        pop = evolve(pop, lo, hi, cfg, ev, rng)
        assert np.all(pop.X >= lo) and np.all(pop.X <= hi)


def _zdt1(X):
    g = 1 + 9 * X[:, 1:].mean(axis=1)
    f1 = X[:, 0]
    return np.column_stack([f1, g * (1 - np.sqrt(f1 / g))])


def test_hypervolume_non_decreasing_in_pareto_mode():
    models = [Fn(lambda X: _zdt1(X)[:, 0]), Fn(lambda X: _zdt1(X)[:, 1])]
    res = optimize(models, np.zeros(4), np.ones(4), GaConfig(generations=60, seed=2),
                   hv_ref=[1.1, 11.0], track_hypervolume=True)
    hv = res.trace["hypervolume"].to_numpy()
    assert np.all(np.diff(hv) >= -1e-12)
    assert hv[-1] > hv[0]


def test_weighted_best_non_increasing():
    models = [Fn(lambda X: _zdt1(X)[:, 0]), Fn(lambda X: _zdt1(X)[:, 1])]
    res = optimize(models, np.zeros(4), np.ones(4), GaConfig(generations=60, mode="weighted_sum", seed=3))
    best = res.trace["best_scalarized"].to_numpy()
    assert np.all(np.diff(best) <= 1e-12)
    assert len(res.front.members) == 1


def test_weighted_cost_only_matches_random_search(woest_dataset, woest):
    from storagemix.surrogate import make_model

    X = woest_dataset[woest.factor_names].to_numpy()
    outs = ["total_annual_cost", "co2_emission"]
    models = [make_model("GBT", {"n_estimators": 60, "max_depth": 3}).fit(X, woest_dataset[o]) for o in outs]
    lo, hi = woest.lower, woest.upper
    cfg = GaConfig(mode="weighted_sum", weights=(1.0, 0.0), seed=0)
    res = optimize(models, lo, hi, cfg, objective_names=outs)
    ga_best = res.front.compromise.objectives[0]
    R = lo + np.random.default_rng(0).random((100_000, len(lo))) * (hi - lo)
    oracle = models[0].predict(R).min()
    assert ga_best <= oracle + 0.02 * abs(oracle)


def test_collapsed_bounds_give_that_point():
    x0 = np.array([0.3, 2.0, -1.0])
    f = lambda X: X.sum(axis=1)  # noqa: E731
    g = lambda X: (X**2).sum(axis=1)  # noqa: E731
    res = optimize([Fn(f), Fn(g)], x0, x0, GaConfig(generations=5))
    assert len(res.front.members) == 1
    m = res.front.members[0]
    assert np.array_equal(m.genes, x0)
    assert m.objectives.tolist() == [f(x0[None])[0], g(x0[None])[0]]


def test_nan_model_is_named():
    bad = Fn(lambda X: np.full(len(X), np.nan))
    with pytest.raises(FloatingPointError, match="ceep"):
        optimize([Fn(_sphere), bad], np.zeros(2), np.ones(2), GaConfig(generations=2),
                 objective_names=["cost", "ceep"])


def test_inverted_bounds_rejected():
    with pytest.raises(ValueError):
        optimize([Fn(_sphere)], np.ones(2), np.zeros(2))


def test_same_seed_same_front():
    models = [Fn(lambda X: _zdt1(X)[:, 0]), Fn(lambda X: _zdt1(X)[:, 1])]
    a = optimize(models, np.zeros(3), np.ones(3), GaConfig(generations=30, seed=9))
    b = optimize(models, np.zeros(3), np.ones(3), GaConfig(generations=30, seed=9))
    assert np.array_equal(a.front.X, b.front.X) and np.array_equal(a.front.F, b.front.F)
    assert a.trace.equals(b.trace)


@pytest.mark.parametrize("kw", [{"population_size": 5}, {"population_size": 2}, {"crossover_prob": 1.5},
                                {"mode": "lexicographic"}, {"generations": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GaConfig(**kw)

# ---------------------------------------------------------------- compromise and hypervolume


def _members(points):
    return [Individual(np.zeros(1), np.array(p, dtype=float)) for p in points]


def test_compromise_examples():
    assert select_compromise(_members([(0, 1), (1, 0), (0.4, 0.4)])).objectives.tolist() == [0.4, 0.4]
    assert select_compromise(_members([(5, 5)])).objectives.tolist() == [5, 5]
    assert select_compromise(_members([(0, 2), (1, 1), (2, 0)])).objectives.tolist() == [1, 1]


def test_compromise_tie_goes_to_objective_order():
    assert select_compromise(_members([(1, 0), (0, 1)])).objectives.tolist() == [0, 1]
    assert select_compromise(_members([(0, 1), (1, 0)])).objectives.tolist() == [0, 1]


def test_compromise_empty():
    with pytest.raises(ValueError):
        select_compromise([])


def test_hypervolume_examples():
    assert hypervolume([[0.0, 0.0]], [1.0, 1.0]) == 1.0
    assert hypervolume([[0.5, 0.0], [0.0, 0.5]], [1.0, 1.0]) == pytest.approx(0.75)
    assert hypervolume([[2.0, 0.0]], [1.0, 1.0]) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_hypervolume_matches_monte_carlo_and_grows(seed, n):
    rng = np.random.default_rng(seed)
    F = rng.random((n, 3))
    ref = np.ones(3)
    hv = hypervolume(F, ref)
    S = rng.random((20_000, 3))
    dominated = (F[None, :, :] <= S[:, None, :]).all(axis=2).any(axis=1)
    assert abs(hv - dominated.mean()) < 0.03
    assert hypervolume(np.vstack([F, rng.random((1, 3))]), ref) >= hv - 1e-12
