"""Exact objectives on an enumerable product-Bernoulli search space.

A sequence model over {0,1}^m factorizes as p(tau | theta) = prod_j
B(tau_j | theta_j), so every expectation, entropy, divergence, quantile, and
estimator mean can be computed by summing over all 2^m outcomes (or over all
multinomial count vectors for batch statistics). This is the ground truth the
policy-gradient estimators are verified against.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import ceil, lgamma

import numpy as np


class BernoulliProductSpace:
    """Fully enumerable toy search space with a fixed reward table."""

    def __init__(self, rewards):
        rewards = np.asarray(rewards, dtype=np.float64)
        size = rewards.shape[0]
        m = int(np.log2(size))
        if 2**m != size:
            raise ValueError("reward table length must be a power of two")
        if size > 2**16:
            raise ValueError("space too large to enumerate")
        self.m = m
        self.rewards = rewards
        # outcome i has bit pattern (i >> j) & 1 for coordinate j
        self.outcomes = np.array(
            [[(i >> j) & 1 for j in range(m)] for i in range(size)], dtype=np.float64
        )

    # -- distribution under theta --------------------------------------

    def probs(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        t = self.outcomes * theta + (1.0 - self.outcomes) * (1.0 - theta)
        return t.prod(axis=1)

    def grad_log_probs(self, theta) -> np.ndarray:
        """(2^m, m) matrix of d log p(tau) / d theta_j."""
        theta = np.asarray(theta, dtype=np.float64)
        return self.outcomes / theta - (1.0 - self.outcomes) / (1.0 - theta)

    # -- exact objectives ----------------------------------------------

    def expected_reward(self, theta) -> float:
        return float(self.probs(theta) @ self.rewards)

    def grad_expected_reward(self, theta, baseline: float = 0.0) -> np.ndarray:
        """Enumerated E[(R - b) grad log p]; equals grad E[R] for any b."""
        p = self.probs(theta)
        return (p * (self.rewards - baseline)) @ self.grad_log_probs(theta)

    def entropy(self, theta) -> float:
        p = self.probs(theta)
        return float(-np.sum(np.where(p > 0.0, p * np.log(p), 0.0)))

    def log_partition(self) -> float:
        rmax = self.rewards.max()
        return float(rmax + np.log(np.exp(self.rewards - rmax).sum()))

    def gibbs(self) -> np.ndarray:
        return np.exp(self.rewards - self.log_partition())

    def kl_to_gibbs(self, theta) -> float:
        p = self.probs(theta)
        q = self.gibbs()
        return float(np.sum(np.where(p > 0.0, p * (np.log(p) - np.log(q)), 0.0)))

    def quantile(self, theta, epsilon: float) -> float:
        """Population (1 - epsilon) reward quantile under p(tau | theta)."""
        order = np.argsort(self.rewards, kind="stable")
        cum = np.cumsum(self.probs(theta)[order])
        target = 1.0 - epsilon
        idx = int(np.searchsorted(cum, target - 1e-15))
        return float(self.rewards[order[min(idx, len(order) - 1)]])

    def j_risk_conditional(self, theta, epsilon: float) -> float:
        """E[R | R >= R_eps], the literal conditional expectation."""
        r_eps = self.quantile(theta, epsilon)
        p = self.probs(theta)
        keep = self.rewards >= r_eps
        mass = p[keep].sum()
        return float((p[keep] @ self.rewards[keep]) / mass)

    def grad_j_risk(self, theta, epsilon: float) -> np.ndarray:
        """Enumerated (1/eps) E[(R - R_eps) 1{R >= R_eps} grad log p].

        This holds the quantile fixed at its current value, which is exact
        away from quantile jumps (the reward distribution is discrete and
        R_eps is locally constant in theta). It is the quantity the
        batch-quantile policy-gradient estimator converges to.
        """
        r_eps = self.quantile(theta, epsilon)
        p = self.probs(theta)
        excess = np.where(self.rewards >= r_eps, self.rewards - r_eps, 0.0)
        return (p * excess) @ self.grad_log_probs(theta) / epsilon

    def exact_objectives(self, theta, epsilon: float = 0.25) -> dict:
        """Closed-form summary of every objective on this space."""
        return {
            "expected_reward": self.expected_reward(theta),
            "entropy": self.entropy(theta),
            "log_partition": self.log_partition(),
            "kl_to_gibbs": self.kl_to_gibbs(theta),
            "quantile": self.quantile(theta, epsilon),
            "j_risk": self.j_risk_conditional(theta, epsilon),
            "grad_expected_reward": self.grad_expected_reward(theta),
            "grad_j_risk": self.grad_j_risk(theta, epsilon),
        }

    # -- batch estimator statistics ------------------------------------

    def _estimator_from_counts(self, counts, theta, epsilon: float):
        """Quantile-baseline gradient estimate for one batch given outcome counts.

        Mirrors the training estimator exactly: the empirical quantile is the
        ceil((1 - eps) N)-th order statistic of the batch, samples below it
        contribute nothing, and the sum is scaled by 1 / (eps N).
        """
        counts = np.asarray(counts)
        n = int(counts.sum())
        k = ceil((1.0 - epsilon) * n)
        order = np.argsort(self.rewards, kind="stable")
        cum = np.cumsum(counts[order])
        pos = int(np.searchsorted(cum, k))
        r_hat = self.rewards[order[pos]]
        excess = np.where(self.rewards >= r_hat, self.rewards - r_hat, 0.0)
        return (counts * excess) @ self.grad_log_probs(theta) / (epsilon * n)

    def estimator_mean_exact(self, theta, epsilon: float, batch_size: int) -> np.ndarray:
        """Exact finite-batch mean of the estimator by multinomial enumeration."""
        p = self.probs(theta)
        logp = np.log(np.maximum(p, 1e-300))
        size = len(self.rewards)
        total = np.zeros(self.m)
        log_nfact = lgamma(batch_size + 1)
        for combo in combinations_with_replacement(range(size), batch_size):
            counts = np.bincount(combo, minlength=size)
            log_pmf = log_nfact + counts @ logp - sum(lgamma(c + 1) for c in counts)
            total += np.exp(log_pmf) * self._estimator_from_counts(counts, theta, epsilon)
        return total

    def estimator_mc(self, theta, epsilon: float, batch_size: int,
                     n_batches: int, rng: np.random.Generator):
        """Monte-Carlo mean and per-coordinate standard error of the estimator."""
        p = self.probs(theta)
        counts = rng.multinomial(batch_size, p, size=n_batches)
        k = ceil((1.0 - epsilon) * batch_size)
        order = np.argsort(self.rewards, kind="stable")
        cum = np.cumsum(counts[:, order], axis=1)
        pos = (cum >= k).argmax(axis=1)
        r_hat = self.rewards[order[pos]][:, None]
        excess = np.where(self.rewards[None, :] >= r_hat,
                          self.rewards[None, :] - r_hat, 0.0)
        grads = (counts * excess) @ self.grad_log_probs(theta) / (epsilon * batch_size)
        mean = grads.mean(axis=0)
        se = grads.std(axis=0, ddof=1) / np.sqrt(n_batches)
        return mean, se

    def sample_outcomes(self, theta, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw outcome indices i with bit j of i distributed as B(theta_j)."""
        bits = rng.random((n, self.m)) < np.asarray(theta)
        weights = (1 << np.arange(self.m))
        return (bits * weights).sum(axis=1)


def four_point_space(rewards=(0.1, 0.45, 0.7, 1.0)) -> BernoulliProductSpace:
    """The standard two-coordinate toy space with four outcomes.

    Outcome order is (0,0), (1,0), (0,1), (1,1); the default reward table is
    increasing and well separated so the top outcome is unambiguous.
    """
    return BernoulliProductSpace(np.asarray(rewards, dtype=np.float64))
