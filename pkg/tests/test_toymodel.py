"""Enumerable toy-space oracles: identities, limits, estimator consistency."""

import numpy as np
import pytest

from symopt.toymodel import BernoulliProductSpace, four_point_space

THETA = np.array([0.8, 0.2])


def test_outcome_probabilities_factorize():
    space = four_point_space()
    p = space.probs(THETA)
    # outcome order (0,0), (1,0), (0,1), (1,1)
    np.testing.assert_allclose(p, [0.2 * 0.8, 0.8 * 0.8, 0.2 * 0.2, 0.8 * 0.2])
    assert p.sum() == pytest.approx(1.0)


def test_entropy_kl_identity_to_1e12():
    space = four_point_space()
    obj = space.exact_objectives(THETA)
    lhs = obj["kl_to_gibbs"]
    rhs = -obj["entropy"] - obj["expected_reward"] + obj["log_partition"]
    assert abs(lhs - rhs) < 1e-12


def test_entropy_kl_identity_random_tables(rng):
    for _ in range(25):
        space = BernoulliProductSpace(rng.uniform(0.0, 1.0, size=4))
        theta = rng.uniform(0.05, 0.95, size=2)
        lhs = space.kl_to_gibbs(theta)
        rhs = -space.entropy(theta) - space.expected_reward(theta) + space.log_partition()
        assert abs(lhs - rhs) < 1e-12


def test_uniform_rewards_make_gibbs_uniform_and_kl_zero():
    space = BernoulliProductSpace(np.full(4, 0.37))
    theta = np.array([0.5, 0.5])  # uniform p
    assert space.kl_to_gibbs(theta) == pytest.approx(0.0, abs=1e-14)


def test_degenerate_model_reaches_its_outcome_reward():
    # as theta -> one-hot, E[R] -> R(that outcome) and H -> 0
    space = four_point_space()
    theta = np.array([1.0, 0.0])  # outcome (1, 0), index 1
    assert space.expected_reward(theta) == pytest.approx(space.rewards[1])
    assert space.entropy(theta) == pytest.approx(0.0, abs=1e-15)
    near = np.array([1.0 - 1e-9, 1e-9])
    assert space.expected_reward(near) == pytest.approx(space.rewards[1], abs=1e-8)
    assert space.entropy(near) < 1e-7


def test_population_quantile_by_hand():
    space = four_point_space()
    # cumulative mass in reward order: .16, .80, .84, 1.0
    assert space.quantile(THETA, epsilon=0.5) == pytest.approx(0.45)
    assert space.quantile(THETA, epsilon=0.25) == pytest.approx(0.45)
    assert space.quantile(THETA, epsilon=0.16) == pytest.approx(0.7)
    assert space.quantile(THETA, epsilon=0.15) == pytest.approx(1.0)
    assert space.quantile(THETA, epsilon=0.05) == pytest.approx(1.0)


def test_conditional_expectation_by_hand():
    space = four_point_space()
    # eps=0.5: threshold 0.45, retained mass .64+.04+.16=.84
    want = (0.64 * 0.45 + 0.04 * 0.7 + 0.16 * 1.0) / 0.84
    assert space.j_risk_conditional(THETA, 0.5) == pytest.approx(want)


def test_grad_expected_reward_matches_finite_differences(rng):
    space = four_point_space()
    for _ in range(10):
        theta = rng.uniform(0.1, 0.9, size=2)
        analytic = space.grad_expected_reward(theta)
        fd = np.zeros(2)
        h = 1e-7
        for j in range(2):
            up, down = theta.copy(), theta.copy()
            up[j] += h
            down[j] -= h
            fd[j] = (space.expected_reward(up) - space.expected_reward(down)) / (2 * h)
        np.testing.assert_allclose(analytic, fd, rtol=1e-6)


def test_baseline_leaves_enumerated_gradient_unchanged():
    space = four_point_space()
    g0 = space.grad_expected_reward(THETA, baseline=0.0)
    gb = space.grad_expected_reward(THETA, baseline=0.37)
    np.testing.assert_allclose(g0, gb, atol=1e-13)


def test_grad_j_risk_matches_finite_differences_of_cvar():
    # CVaR(theta) = R_eps + (1/eps) E[(R - R_eps)+] with the quantile value
    # frozen; its theta-gradient is what grad_j_risk enumerates
    space = four_point_space()
    eps = 0.5
    r_eps = space.quantile(THETA, eps)

    def cvar(theta):
        p = space.probs(theta)
        excess = np.maximum(space.rewards - r_eps, 0.0)
        return r_eps + float(p @ excess) / eps

    analytic = space.grad_j_risk(THETA, eps)
    h = 1e-7
    fd = np.zeros(2)
    for j in range(2):
        up, down = THETA.copy(), THETA.copy()
        up[j] += h
        down[j] -= h
        fd[j] = (cvar(up) - cvar(down)) / (2 * h)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6)


def test_vpg_sample_estimate_matches_enumeration(rng):
    # Monte-Carlo REINFORCE estimate over 1e5 samples vs the enumerated
    # gradient of E[R], within 3 standard errors per coordinate
    space = four_point_space()
    n = 100_000
    outcomes = space.sample_outcomes(THETA, n, rng)
    glp = space.grad_log_probs(THETA)[outcomes]
    weights = space.rewards[outcomes][:, None]
    estimates = weights * glp
    mean = estimates.mean(axis=0)
    se = estimates.std(axis=0, ddof=1) / np.sqrt(n)
    target = space.grad_expected_reward(THETA)
    assert np.all(np.abs(mean - target) <= 3 * se)


def test_rspg_estimator_mean_exact_approaches_fixed_quantile_gradient():
    # the finite-batch estimator mean (exact, by multinomial enumeration)
    # carries a bias from empirical-quantile misidentification that decays
    # exponentially in the batch size
    space = four_point_space()
    target = space.grad_j_risk(THETA, 0.5)
    bias_20 = np.abs(space.estimator_mean_exact(THETA, 0.5, 20) - target).max()
    bias_40 = np.abs(space.estimator_mean_exact(THETA, 0.5, 40) - target).max()
    assert bias_40 < 1e-4
    assert bias_40 < bias_20 / 10.0


def test_rspg_estimator_mc_consistency(rng):
    space = four_point_space()
    mc, se = space.estimator_mc(THETA, 0.5, 100, 20_000, rng)
    target = space.grad_j_risk(THETA, 0.5)
    assert np.all(np.abs(mc - target) <= 4 * se)


def test_reward_table_must_be_power_of_two():
    with pytest.raises(ValueError):
        BernoulliProductSpace(np.zeros(3))
