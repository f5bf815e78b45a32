"""Benchmark registry, dataset generation, and the experiment harness."""

import numpy as np
import pytest

from symopt import (
    ConfigError,
    GPConfig,
    SearchSettings,
    TrainerConfig,
    evaluate_ids,
    get_benchmark,
    list_benchmarks,
    make_dataset,
    make_library,
    nguyen_spec,
    run_single,
)
from symopt.bench import BenchmarkSpec, RunRecord, run_experiment, summarize


def test_registry_contains_the_twelve_nguyen_and_r_suite():
    names = set(list_benchmarks())
    assert {f"nguyen-{i}" for i in range(1, 13)} <= names
    assert {"r-1", "r-2", "r-3"} <= names


def test_nguyen_1_definition():
    spec = nguyen_spec(1)
    assert spec.n_variables == 1
    x = np.array([[0.5], [-1.0], [2.0]])
    y = evaluate_ids(spec.truth_ids, spec.truth_lib, x)
    np.testing.assert_allclose(y, x[:, 0] ** 3 + x[:, 0] ** 2 + x[:, 0])


def test_nguyen_11_two_variables():
    spec = nguyen_spec(11)
    assert spec.n_variables == 2
    X = np.array([[2.0, 3.0], [1.5, 0.5]])
    y = evaluate_ids(spec.truth_ids, spec.truth_lib, X)
    np.testing.assert_allclose(y, X[:, 0] ** X[:, 1])


def test_nguyen_8_truth_value():
    spec = nguyen_spec(8)
    y = evaluate_ids(spec.truth_ids, spec.truth_lib, np.array([[4.0]]))
    np.testing.assert_allclose(y, [2.0])


def test_unknown_benchmark_id_rejected():
    with pytest.raises(ConfigError):
        nguyen_spec(13)
    with pytest.raises(ConfigError):
        get_benchmark("nguyen-99")


def test_dataset_deterministic_per_seed():
    spec = nguyen_spec(3)
    a_train, a_test = make_dataset(spec, 7)
    b_train, b_test = make_dataset(spec, 7)
    np.testing.assert_array_equal(a_train.X, b_train.X)
    np.testing.assert_array_equal(a_test.y, b_test.y)
    c_train, _ = make_dataset(spec, 8)
    assert not np.array_equal(a_train.X, c_train.X)


def test_dataset_domains_respected():
    for bench_id, low, high in ((8, 0.0, 4.0), (7, 0.0, 2.0), (1, -1.0, 1.0)):
        spec = nguyen_spec(bench_id)
        train, test = make_dataset(spec, 0)
        for ds in (train, test):
            assert ds.X.min() >= low and ds.X.max() <= high
            assert ds.X.shape == (20, spec.n_variables)


def test_targets_are_exact_truth_evaluations():
    spec = nguyen_spec(5)
    train, test = make_dataset(spec, 3)
    for ds in (train, test):
        want = evaluate_ids(spec.truth_ids, spec.truth_lib, ds.X)
        np.testing.assert_array_equal(ds.y, want)


def test_train_and_test_draws_differ():
    spec = nguyen_spec(2)
    train, test = make_dataset(spec, 0)
    assert not np.array_equal(train.X, test.X)


def _forced_spec():
    """A benchmark whose 1-token ground truth is the only samplable sequence."""
    lib = make_library((), 1)
    return BenchmarkSpec(
        name="forced-x",
        expression="x",
        n_variables=1,
        truth_ids=(lib.id_of("x1"),),
        truth_lib=lib,
        domain=((-1.0, 1.0),),
        operators=(),
    )


def _tiny_settings(**overrides):
    trainer = TrainerConfig(kind="rspg", batch_size=20, max_evaluations=60,
                            epsilon=0.2, learning_rate=1e-3)
    base = dict(trainer=trainer, gp=GPConfig(), constraints=("length",),
                min_length=1, max_length=8, hidden_size=4)
    base.update(overrides)
    return SearchSettings(**base)


def test_forced_recovery_in_one_step():
    out = run_single(_forced_spec(), _tiny_settings(), seed=0)
    record = out.record
    assert record.recovered and record.steps_to_solve == 1
    assert record.equiv_method == "canonical"
    assert not record.censored
    assert record.test_nmse < 1e-12  # recovery implies test fit
    assert record.best_expression == "x1"


def test_censored_run_is_marked_not_solved():
    # nguyen-12 at a tiny budget: never recovered, cleanly censored
    settings = _tiny_settings(min_length=4, max_length=20,
                              constraints=("length", "no_const_children",
                                           "inverse", "trig"))
    settings.trainer.batch_size = 30
    settings.trainer.max_evaluations = 90
    settings.trainer.epsilon = 0.2
    out = run_single(get_benchmark("nguyen-12"), settings, seed=0)
    assert not out.record.recovered
    assert out.record.censored
    assert out.record.steps_to_solve == out.result.iterations
    assert out.record.evals_used == 90


def test_run_single_deterministic():
    a = run_single(_forced_spec(), _tiny_settings(), seed=5).record
    b = run_single(_forced_spec(), _tiny_settings(), seed=5).record
    assert (a.recovered, a.steps_to_solve, a.best_reward) == \
        (b.recovered, b.steps_to_solve, b.best_reward)


def test_experiment_aggregation_and_seed_order_invariance():
    records, traces, summary = run_experiment(_forced_spec(), _tiny_settings(),
                                              seeds=[3, 1, 2], jobs=1)
    assert summary.n_runs == 3 and summary.n_recovered == 3
    assert summary.recovery_rate == 1.0 and summary.recovery_se == 0.0
    shuffled = summarize(list(reversed(records)))
    assert shuffled.recovery_rate == summary.recovery_rate
    assert shuffled.mean_steps_solved == summary.mean_steps_solved
    assert len(traces) == 3


def test_summary_standard_error_bernoulli():
    base = run_single(_forced_spec(), _tiny_settings(), seed=0).record
    import dataclasses

    records = [base, dataclasses.replace(base, seed=1, recovered=False, censored=True)]
    summary = summarize(records)
    assert summary.recovery_rate == 0.5
    assert summary.recovery_se == pytest.approx(np.sqrt(0.25 / 2))
    assert summary.n_censored == 1


def test_parallel_experiment_matches_serial():
    serial, _, _ = run_experiment(_forced_spec(), _tiny_settings(), seeds=[0, 1], jobs=1)
    parallel, _, _ = run_experiment(_forced_spec(), _tiny_settings(), seeds=[0, 1], jobs=2)
    for a, b in zip(serial, parallel):
        assert a.seed == b.seed
        assert a.best_reward == b.best_reward
        assert a.recovered == b.recovered
