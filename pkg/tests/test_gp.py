"""GP inner loop: statelessness, constraint-respecting variation, budget."""

import numpy as np
import pytest

from symopt import (
    Dataset,
    GPConfig,
    RewardEvaluator,
    SampleBatch,
    TrainerConfig,
    build_adjusters,
    hybrid_loop,
    init_policy,
    is_complete,
    is_constraint_valid,
    make_library,
    sample_batch,
    scan_violations,
    seed_population,
    train_loop,
)
from symopt.gp import (
    crossover,
    gp_generation,
    point_mutation,
    subtree_delete,
    subtree_insert,
    subtree_replace,
)

from conftest import ids_of


@pytest.fixture
def lib():
    return make_library(("add", "sub", "mul", "div", "sin", "cos", "exp", "log"), 1)


@pytest.fixture
def adjusters(lib):
    return build_adjusters(("length", "no_const_children", "inverse", "trig"),
                           lib, 4, 30)


@pytest.fixture
def scored_batch(lib, adjusters, rng):
    params = init_policy(8, lib, seed=0)
    batch = sample_batch(params, lib, adjusters, rng, 100, max_len=30)
    batch.rewards = rng.random(100)
    return batch


def validator_for(lib):
    return lambda ids: is_constraint_valid(ids, lib, 4, 30)


# --- seeding -----------------------------------------------------------------

def test_seed_population_copies_batch_exactly(scored_batch):
    pop = seed_population(scored_batch)
    assert pop.traversals == scored_batch.traversals
    np.testing.assert_array_equal(pop.rewards, scored_batch.rewards)


def test_seed_population_requires_rewards(lib, adjusters, rng):
    params = init_policy(8, lib, seed=0)
    batch = sample_batch(params, lib, adjusters, rng, 10, max_len=30)
    with pytest.raises(ValueError):
        seed_population(batch)


def test_seeded_fitness_matches_fresh_evaluation(lib, adjusters, rng):
    X = rng.uniform(-1, 1, size=(20, 1))
    data = Dataset(X, X[:, 0] ** 3 + X[:, 0])
    evaluator = RewardEvaluator(data, lib)
    params = init_policy(8, lib, seed=1)
    batch = sample_batch(params, lib, adjusters, rng, 50, max_len=30)
    batch.rewards = np.array([evaluator(t).value for t in batch.traversals])
    pop = seed_population(batch)
    fresh = np.array([evaluator(t).value for t in pop.traversals])
    np.testing.assert_array_equal(pop.rewards, fresh)


# --- variation operators -----------------------------------------------------

def test_crossover_preserves_completeness(lib, rng):
    a = ids_of(lib, "add", "x1", "x1")
    b = ids_of(lib, "mul", "sin", "x1", "x1")
    for _ in range(100):
        child = crossover(a, b, lib, rng)
        assert is_complete(child, lib)


def test_point_mutation_swaps_same_arity(lib, rng):
    ids = ids_of(lib, "add", "sin", "x1", "x1")
    for _ in range(100):
        child = point_mutation(ids, lib, rng)
        assert is_complete(child, lib)
        assert len(child) == len(ids)
        assert [int(lib.arities[t]) for t in child] == [int(lib.arities[t]) for t in ids]


def test_insert_delete_replace_produce_complete_traversals(lib, rng):
    from symopt import random_complete

    for _ in range(300):
        ids = random_complete(lib, rng, max_len=20, min_len=4)
        for op in (subtree_insert, subtree_delete, subtree_replace):
            child = op(ids, lib, rng)
            assert is_complete(child, lib), (op.__name__, ids, child)


def test_delete_shrinks_or_keeps(lib, rng):
    from symopt import random_complete

    for _ in range(100):
        ids = random_complete(lib, rng, max_len=20, min_len=6)
        assert len(subtree_delete(ids, lib, rng)) <= len(ids)


# --- generations --------------------------------------------------------------

def test_zero_probability_variation_yields_parent_copies(lib, scored_batch, rng):
    config = GPConfig(enabled=True, crossover_prob=0.0, mutation_prob=0.0)
    pop = seed_population(scored_batch)
    offspring = gp_generation(pop, lib, rng, config, validator_for(lib))
    parents = set(pop.traversals)
    assert len(offspring) == len(pop)
    assert all(child in parents for child in offspring)


def test_offspring_respect_all_constraints(lib, scored_batch, rng):
    config = GPConfig(enabled=True)
    pop = seed_population(scored_batch)
    checked = 0
    for _ in range(20):
        offspring = gp_generation(pop, lib, rng, config, validator_for(lib))
        for child in offspring:
            assert scan_violations(child, lib, 4, 30) == []
            checked += 1
        rewards = rng.random(len(offspring))
        pop = type(pop)(offspring, rewards)
    assert checked == 2000


def test_generation_is_deterministic_per_seed(lib, scored_batch):
    config = GPConfig(enabled=True)
    pop = seed_population(scored_batch)
    a = gp_generation(pop, lib, np.random.default_rng(7), config, validator_for(lib))
    b = gp_generation(pop, lib, np.random.default_rng(7), config, validator_for(lib))
    assert a == b


# --- hybrid loop ---------------------------------------------------------------

def hybrid_setup(rng, evals=600, batch=50, generations=2, elites=5):
    lib = make_library(("add", "sub", "mul", "div", "sin", "cos", "exp", "log"), 1)
    adjusters = build_adjusters(("length", "no_const_children", "inverse", "trig"),
                                lib, 4, 30)
    X = rng.uniform(-1, 1, size=(20, 1))
    data = Dataset(X, X[:, 0] ** 2 + X[:, 0])
    trainer = TrainerConfig(kind="pqt", batch_size=batch, max_evaluations=evals,
                            epsilon=0.1, learning_rate=1e-3)
    gp = GPConfig(enabled=True, generations=generations, elites=elites)
    return lib, adjusters, data, trainer, gp


def test_budget_charges_policy_plus_gp_evaluations(rng):
    lib, adjusters, data, trainer, gp = hybrid_setup(
        rng, evals=600, batch=50, generations=2)
    result = hybrid_loop(trainer, gp, lib, data, adjusters,
                         np.random.default_rng(0), validator=validator_for(lib),
                         hidden_size=4, max_len=30)
    # each outer step: 50 sampled + 2 generations x 50 offspring = 150
    per_step = 50 + 2 * 50
    assert result.candidates == result.iterations * per_step
    assert [row.evals for row in result.trace] == \
        [per_step * (i + 1) for i in range(result.iterations)]


def test_degenerate_hybrid_equals_plain_loop(rng):
    # S=0 and M=0: no GP evaluations, identical batches and best expression
    lib, adjusters, data, trainer, _ = hybrid_setup(rng, evals=300, batch=50)
    gp_off = GPConfig(enabled=True, generations=0, elites=0)
    hybrid = hybrid_loop(trainer, gp_off, lib, data, adjusters,
                         np.random.default_rng(5), validator=validator_for(lib),
                         hidden_size=4, max_len=30)
    plain = train_loop(trainer, lib, data, adjusters, np.random.default_rng(5),
                       hidden_size=4, max_len=30)
    assert hybrid.best_ids == plain.best_ids
    assert hybrid.best_reward == plain.best_reward
    assert hybrid.candidates == plain.candidates


def test_hybrid_statelessness_gp_population_not_carried(rng):
    # run two iterations; the second iteration's GP seeds from the second
    # policy batch only, which the budget arithmetic already pins down; here
    # verify determinism of the whole two-step run instead of internal state
    lib, adjusters, data, trainer, gp = hybrid_setup(rng, evals=300, batch=50,
                                                     generations=1)
    a = hybrid_loop(trainer, gp, lib, data, adjusters, np.random.default_rng(9),
                    validator=validator_for(lib), hidden_size=4, max_len=30)
    b = hybrid_loop(trainer, gp, lib, data, adjusters, np.random.default_rng(9),
                    validator=validator_for(lib), hidden_size=4, max_len=30)
    assert a.best_ids == b.best_ids
    assert [r.__dict__ for r in a.trace] == [r.__dict__ for r in b.trace]


def test_hybrid_best_tracks_elites_too(rng):
    lib, adjusters, data, trainer, gp = hybrid_setup(rng, evals=450, batch=50,
                                                     generations=2, elites=10)
    result = hybrid_loop(trainer, gp, lib, data, adjusters,
                         np.random.default_rng(1), validator=validator_for(lib),
                         hidden_size=4, max_len=30)
    best = [row.best_reward for row in result.trace]
    assert best == sorted(best)
    assert result.best_reward >= max(row.mean_reward for row in result.trace)
