"""Built-in verification suite behind `symopt selftest`.

Quick finite-difference checks of every training gradient, the enumerable
toy-space identities, and the quantile/queue properties. Each check returns
(name, passed, detail); the CLI prints one line per check.
"""

from __future__ import annotations

import numpy as np

from .policy import batch_gradient, init_policy, params_from_flat, sample_batch
from .priors import build_adjusters
from .tokens import make_library
from .toymodel import four_point_space
from .train import TopKQueue, empirical_quantile, rspg_weights, vpg_weights


def _loss_for(params, lib, traversals, adjusters, seq_w, ent_w):
    _, log_probs, entropies, _ = batch_gradient(
        params, lib, traversals, adjusters, np.zeros(len(traversals)),
    )
    return float(np.dot(seq_w, log_probs) + np.dot(ent_w, entropies))


def _fd_gradient(params, lib, traversals, adjusters, seq_w, ent_w, h=1e-5):
    flat = params.to_flat()
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        for sign in (1.0, -1.0):
            probe = flat.copy()
            probe[j] += sign * h
            p = params_from_flat(probe, params.hidden_size, params.n_in, params.n_out)
            grad[j] += sign * _loss_for(p, lib, traversals, adjusters, seq_w, ent_w)
    return grad / (2.0 * h)


def check_gradients(seed: int = 0) -> tuple[str, bool, str]:
    lib = make_library(("add", "mul", "sin", "log"), 1, include_const=True)
    adjusters = build_adjusters(("length", "no_const_children", "inverse", "trig"),
                                lib, min_len=2, max_len=10)
    rng = np.random.default_rng(seed)
    params = init_policy(4, lib, seed=seed)
    batch = sample_batch(params, lib, adjusters, rng, 4, max_len=10)
    rewards = rng.uniform(0.0, 1.0, len(batch))
    worst = 0.0
    for seq_w, ent_w in (
        (vpg_weights(rewards, 0.3), np.full(4, 0.01 / 4)),          # vpg + entropy
        (rspg_weights(rewards, 0.5)[0], np.zeros(4)),               # rspg, frozen set
        (np.full(4, 1.0 / 4), np.zeros(4)),                         # pqt-style mean
        (np.zeros(4), np.full(4, 0.25)),                            # entropy alone
    ):
        analytic, _, _, _ = batch_gradient(
            params, lib, batch.traversals, adjusters, seq_w, entropy_weights=ent_w
        )
        numeric = _fd_gradient(params, lib, batch.traversals, adjusters, seq_w, ent_w)
        scale = max(float(np.max(np.abs(numeric))), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
    return ("gradient finite differences", worst < 1e-4, f"max rel err {worst:.2e}")


def check_toy_identities() -> tuple[str, bool, str]:
    space = four_point_space()
    theta = np.array([0.8, 0.2])
    obj = space.exact_objectives(theta)
    lhs = obj["kl_to_gibbs"]
    rhs = -obj["entropy"] - obj["expected_reward"] + obj["log_partition"]
    err = abs(lhs - rhs)
    ok = err < 1e-12
    # baseline invariance of the enumerated expected-reward gradient
    g0 = space.grad_expected_reward(theta, baseline=0.0)
    gb = space.grad_expected_reward(theta, baseline=0.37)
    ok = ok and np.allclose(g0, gb, atol=1e-12)
    return ("toy-space entropy/KL identity", ok, f"identity err {err:.2e}")


def check_quantile_queue(seed: int = 0) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(200):
        n = int(rng.integers(2, 200))
        eps = float(rng.uniform(0.02, 0.5))
        rewards = rng.random(n)
        q = empirical_quantile(rewards, eps)
        ok = ok and int((rewards >= q).sum()) >= int(np.ceil(eps * n))
    queue = TopKQueue(8)
    last_min = float("-inf")
    for _ in range(2000):
        ids = tuple(rng.integers(0, 5, size=rng.integers(1, 6)))
        queue.insert(ids, float(rng.random()))
        if len(queue) == queue.capacity:
            ok = ok and queue.min_reward >= last_min - 1e-15
            last_min = queue.min_reward
    items = queue.items()
    ok = ok and len({ids for ids, _ in items}) == len(items)
    return ("quantile retention and queue monotonicity", ok, "")


def run_all(seed: int = 0):
    return [check_gradients(seed), check_toy_identities(), check_quantile_queue(seed)]
