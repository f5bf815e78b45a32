"""Policy behavior: init, shapes, sampling statistics, exact gradients."""

import numpy as np
import pytest

from symopt import (
    UnreachableTraversalError,
    build_adjusters,
    init_policy,
    load_params,
    log_prob_and_grad,
    sample_batch,
    sample_sequence,
    save_params,
    scan_violations,
    step_logits,
)
from symopt.policy import batch_gradient, params_from_flat

from conftest import ids_of


@pytest.fixture
def small_lib():
    from symopt import make_library

    return make_library(("add", "mul", "sin", "log"), 1, include_const=True)


@pytest.fixture
def adjusters(small_lib):
    return build_adjusters(("length", "no_const_children", "inverse", "trig"),
                           small_lib, min_len=2, max_len=12)


# --- init -------------------------------------------------------------------

def test_init_is_deterministic(small_lib):
    a = init_policy(16, small_lib, seed=7)
    b = init_policy(16, small_lib, seed=7)
    np.testing.assert_array_equal(a.to_flat(), b.to_flat())


def test_different_seeds_differ(small_lib):
    a = init_policy(16, small_lib, seed=1)
    b = init_policy(16, small_lib, seed=2)
    assert not np.array_equal(a.to_flat(), b.to_flat())


def test_init_range_and_logit_shape(small_lib):
    params = init_policy(32, small_lib, seed=0)
    flat = params.to_flat()
    assert np.abs(flat).max() <= 0.1
    logits, hidden = step_logits(params, None, (small_lib.empty_id, small_lib.empty_id))
    assert logits.shape == (small_lib.size,)
    assert hidden.shape == (32,)


# --- step logits -------------------------------------------------------------

def test_zero_params_give_uniform_logits(small_lib):
    params = init_policy(8, small_lib, seed=0)
    params.set_flat(np.zeros(params.n_params))
    logits, _ = step_logits(params, None, (small_lib.empty_id, small_lib.empty_id))
    np.testing.assert_allclose(logits, logits[0])


def test_step_logits_pure_given_state(small_lib):
    params = init_policy(8, small_lib, seed=3)
    obs = (small_lib.id_of("add"), small_lib.id_of("x1"))
    first, h1 = step_logits(params, None, obs)
    again, h2 = step_logits(params, None, obs)
    np.testing.assert_array_equal(first, again)
    np.testing.assert_array_equal(h1, h2)


def test_output_projection_column_touches_one_first_step_logit(small_lib):
    params = init_policy(8, small_lib, seed=4)
    base, _ = step_logits(params, None, (small_lib.empty_id, small_lib.empty_id))
    target = small_lib.id_of("sin")
    params.w_out[:, target] += 0.25
    bumped, _ = step_logits(params, None, (small_lib.empty_id, small_lib.empty_id))
    delta = bumped - base
    assert abs(delta[target]) > 0
    others = np.delete(delta, target)
    np.testing.assert_allclose(others, 0.0, atol=1e-15)


# --- sampling ----------------------------------------------------------------

def test_sampled_traversals_satisfy_constraints(small_lib, adjusters, rng):
    params = init_policy(8, small_lib, seed=0)
    batch = sample_batch(params, small_lib, adjusters, rng, 2000, max_len=12)
    for t in batch.traversals:
        assert scan_violations(t, small_lib, min_len=2, max_len=12) == []


def test_sample_log_prob_matches_replay(small_lib, adjusters, rng):
    params = init_policy(8, small_lib, seed=1)
    batch = sample_batch(params, small_lib, adjusters, rng, 64, max_len=12)
    for i in range(0, 64, 7):
        lp, _ = log_prob_and_grad(params, batch.traversals[i], adjusters, small_lib)
        assert lp == pytest.approx(batch.log_probs[i], abs=1e-12)


def test_mean_neg_log_prob_estimates_entropy(small_lib, adjusters):
    # Monte Carlo identity: E[-log p(tau)] = H(p) = E[sum of step entropies]
    params = init_policy(8, small_lib, seed=2)
    rng = np.random.default_rng(42)
    batch = sample_batch(params, small_lib, adjusters, rng, 4000, max_len=12)
    diff = -batch.log_probs - batch.entropies
    se = diff.std(ddof=1) / np.sqrt(len(diff))
    assert abs(diff.mean()) < 3 * se + 1e-9


def test_sampling_is_deterministic_per_seed(small_lib, adjusters):
    params = init_policy(8, small_lib, seed=9)
    a = sample_batch(params, small_lib, adjusters, np.random.default_rng(5), 64, 12)
    b = sample_batch(params, small_lib, adjusters, np.random.default_rng(5), 64, 12)
    assert a.traversals == b.traversals
    np.testing.assert_array_equal(a.log_probs, b.log_probs)


# --- gradients ---------------------------------------------------------------

def _fd_loss_grad(params, small_lib, adjusters, traversals, w, ew, h=1e-5):
    """Central finite differences on the weighted log-prob + entropy loss."""
    def loss(flat):
        p = params_from_flat(flat, params.hidden_size, params.n_in, params.n_out)
        _, lp, en, _ = batch_gradient(p, small_lib, traversals, adjusters,
                                      np.zeros(len(traversals)))
        return float(np.dot(w, lp) + np.dot(ew, en))

    flat = params.to_flat()
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        up = flat.copy()
        up[j] += h
        down = flat.copy()
        down[j] -= h
        grad[j] = (loss(up) - loss(down)) / (2 * h)
    return grad


def test_log_prob_gradient_finite_differences(small_lib, adjusters):
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(20):
        params = init_policy(4, small_lib, seed=100 + trial)
        batch = sample_batch(params, small_lib, adjusters, rng, 2, max_len=12)
        w = rng.normal(size=2)
        ew = rng.uniform(0.0, 0.3, size=2)
        analytic, _, _, _ = batch_gradient(params, small_lib, batch.traversals,
                                           adjusters, w, entropy_weights=ew)
        numeric = _fd_loss_grad(params, small_lib, adjusters, batch.traversals, w, ew)
        scale = max(np.abs(numeric).max(), 1e-8)
        worst = max(worst, np.abs(analytic - numeric).max() / scale)
    assert worst < 1e-4, f"max relative error {worst}"


def test_uniform_policy_log_prob_is_length_log_size(small_lib):
    params = init_policy(8, small_lib, seed=0)
    params.set_flat(np.zeros(params.n_params))
    ids = ids_of(small_lib, "add", "x1", "x1")
    lp, _ = log_prob_and_grad(params, ids, [], small_lib)
    assert lp == pytest.approx(-3 * np.log(small_lib.size), abs=1e-12)


def test_gradient_of_sum_is_sum_of_gradients(small_lib, adjusters, rng):
    params = init_policy(4, small_lib, seed=55)
    batch = sample_batch(params, small_lib, adjusters, rng, 3, max_len=12)
    total, _, _, _ = batch_gradient(params, small_lib, batch.traversals, adjusters,
                                    np.ones(3))
    parts = np.zeros_like(total)
    for t in batch.traversals:
        _, g = log_prob_and_grad(params, t, adjusters, small_lib)
        parts += g
    np.testing.assert_allclose(total, parts, rtol=1e-12, atol=1e-14)


def test_unreachable_traversal_raises(small_lib, adjusters):
    params = init_policy(8, small_lib, seed=0)
    # length 1 violates the min-length mask on its own path
    with pytest.raises(UnreachableTraversalError):
        log_prob_and_grad(params, ids_of(small_lib, "x1"), adjusters, small_lib)


def test_unreachable_traversal_can_be_dropped(small_lib, adjusters):
    params = init_policy(8, small_lib, seed=0)
    good = ids_of(small_lib, "add", "x1", "x1")
    bad = ids_of(small_lib, "x1")
    grad, lps, _, dropped = batch_gradient(
        params, small_lib, [good, bad], adjusters, [1.0, 1.0],
        on_unreachable="drop",
    )
    assert dropped == [1]
    assert np.isneginf(lps[1]) and np.isfinite(lps[0])
    only_good, _, _, _ = batch_gradient(params, small_lib, [good], adjusters, [1.0])
    np.testing.assert_allclose(grad, only_good, rtol=1e-12)


def test_masked_to_single_choice_has_zero_entropy(small_lib):
    import symopt.priors as priors

    class OnlyX(priors.LogitAdjuster):
        def adjust(self, ctx):
            out = np.full(ctx.lib.size, -np.inf)
            out[ctx.lib.id_of("x1")] = 0.0
            return out

    params = init_policy(8, small_lib, seed=0)
    ids, lp, ent = sample_sequence(params, [OnlyX()], np.random.default_rng(0), 8, small_lib)
    assert ids == (small_lib.id_of("x1"),)
    assert ent == pytest.approx(0.0, abs=1e-15)


# --- checkpoints -------------------------------------------------------------

def test_checkpoint_round_trip(small_lib, tmp_path):
    params = init_policy(8, small_lib, seed=21)
    path = tmp_path / "policy.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.hidden_size == params.hidden_size
    assert loaded.n_in == params.n_in and loaded.n_out == params.n_out
    np.testing.assert_array_equal(loaded.to_flat(), params.to_flat())


def test_checkpoint_rejects_bad_magic(small_lib, tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_params(path)
