"""Reward assignment: map fitted candidate expressions to [0, 1].

Reward is 1 / (1 + NMSE) on the training split, where NMSE normalizes the
mean squared error by the population variance of the targets. Any non-finite
evaluation makes the expression invalid: reward 0, flagged, and counted, but
never an exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constopt import optimize_constants
from .dataset import Dataset
from .evaluate import INVALID, evaluate_ids
from .tokens import TokenLibrary
from .traversal import count_const


@dataclass(frozen=True)
class RewardValue:
    value: float
    invalid: bool
    nmse: float = float("nan")
    const_values: tuple[float, ...] = ()
    n_const_evals: int = 0


def nmse(y_hat, y) -> float:
    """Mean squared error over the population variance of y."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError("y_hat and y must have equal length")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean((y_hat - y) ** 2) / np.var(y))


def reward_for(
    ids,
    dataset: Dataset,
    lib: TokenLibrary,
    const_budget: int = 200,
    rng: np.random.Generator | None = None,
) -> RewardValue:
    """Reward of a complete traversal, fitting constants first if present."""
    const_evals = 0
    const_values: tuple[float, ...] = ()
    if count_const(ids, lib) > 0:
        fit = optimize_constants(ids, dataset, lib, budget=const_budget, rng=rng)
        const_values = tuple(float(v) for v in fit.values)
        const_evals = fit.n_evals
    y_hat = evaluate_ids(ids, lib, dataset.X, const_values=const_values or None)
    if y_hat is INVALID:
        return RewardValue(0.0, True, const_values=const_values, n_const_evals=const_evals)
    err = nmse(y_hat, dataset.y)
    if not np.isfinite(err):
        return RewardValue(0.0, True, const_values=const_values, n_const_evals=const_evals)
    return RewardValue(
        1.0 / (1.0 + err), False, nmse=err,
        const_values=const_values, n_const_evals=const_evals,
    )


class RewardEvaluator:
    """Caching reward oracle with candidate and inner-evaluation counters.

    Every call counts one candidate evaluation toward the search budget,
    cache hit or not; constant-fitting objective calls are tallied
    separately. The cache is keyed by the traversal itself and bounded to
    keep long runs from growing without limit.
    """

    def __init__(
        self,
        dataset: Dataset,
        lib: TokenLibrary,
        const_budget: int = 200,
        rng: np.random.Generator | None = None,
        cache_limit: int = 300_000,
    ):
        self.dataset = dataset
        self.lib = lib
        self.const_budget = const_budget
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.cache_limit = cache_limit
        self.candidates = 0      # every reward request, duplicates included
        self.const_evals = 0     # inner objective evaluations
        self.cache_hits = 0
        self._cache: dict[tuple[int, ...], RewardValue] = {}

    def __call__(self, ids) -> RewardValue:
        key = tuple(ids)
        self.candidates += 1
        hit = self._cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        result = reward_for(key, self.dataset, self.lib, self.const_budget, self.rng)
        self.const_evals += result.n_const_evals
        if len(self._cache) >= self.cache_limit:
            self._cache.clear()
        self._cache[key] = result
        return result
