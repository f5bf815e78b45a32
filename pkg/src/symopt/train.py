"""Training objectives and the outer search loop.

Three ways to turn a batch of sampled expressions into a policy update:

* vpg  - REINFORCE on mean reward with an exponentially-moving-average
         baseline over batch means.
* rspg - quantile policy gradient: only samples at or above the empirical
         (1 - epsilon) reward quantile contribute, weighted by their excess
         over it and scaled by 1 / (epsilon N).
* pqt  - maximum likelihood of the persistent top-K unique sequences.

An entropy bonus (summed per-step entropies, averaged over the contributing
sequences) is added for every kind. The outer loop samples, fits constants,
scores, updates, and tracks the best expression ever seen until the candidate
evaluation budget is exhausted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .errors import ConfigError
from .policy import PolicyParams, SampleBatch, batch_gradient, init_policy, sample_batch
from .reward import RewardEvaluator
from .tokens import TokenLibrary

TRAINER_KINDS = ("vpg", "rspg", "pqt")
OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainerConfig:
    kind: str = "rspg"
    learning_rate: float = 5e-4
    entropy_coef: float = 0.005
    epsilon: float = 0.05
    batch_size: int = 1000
    queue_size: int = 10
    baseline_decay: float = 0.99
    max_evaluations: int = 500_000
    optimizer: str = "adam"

    def validate(self) -> None:
        if self.kind not in TRAINER_KINDS:
            raise ConfigError(f"trainer.kind must be one of {TRAINER_KINDS}", "trainer.kind")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("trainer.epsilon must lie in (0, 1)", "trainer.epsilon")
        if self.learning_rate <= 0.0:
            raise ConfigError("trainer.learning_rate must be positive", "trainer.learning_rate")
        if self.batch_size < 1:
            raise ConfigError("trainer.batch_size must be >= 1", "trainer.batch_size")
        if self.kind == "rspg" and self.batch_size < 1.0 / self.epsilon:
            raise ConfigError(
                "rspg needs batch_size >= 1/epsilon so the retained set is nonempty",
                "trainer.batch_size",
            )
        if self.queue_size < 1:
            raise ConfigError("trainer.queue_size must be >= 1", "trainer.queue_size")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError("trainer.baseline_decay must lie in [0, 1)", "trainer.baseline_decay")
        if self.max_evaluations < 0:
            raise ConfigError("trainer.max_evaluations must be >= 0", "trainer.max_evaluations")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"trainer.optimizer must be one of {OPTIMIZERS}", "trainer.optimizer")


class TopKQueue:
    """Persistent store of the K best unique traversals.

    Duplicates are discarded outright; once full, an insertion must strictly
    beat the current minimum, so the stored minimum reward never decreases.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[tuple[float, int, tuple[int, ...]]] = []
        self._members: set[tuple[int, ...]] = set()
        self._counter = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, ids) -> bool:
        return tuple(ids) in self._members

    @property
    def min_reward(self) -> float:
        return min(e[0] for e in self._entries) if self._entries else float("-inf")

    def insert(self, ids, reward: float) -> bool:
        key = tuple(ids)
        if key in self._members:
            return False
        if len(self._entries) < self.capacity:
            self._entries.append((float(reward), self._counter, key))
            self._members.add(key)
            self._counter += 1
            return True
        worst = min(range(len(self._entries)), key=lambda i: (self._entries[i][0], -self._entries[i][1]))
        if reward <= self._entries[worst][0]:
            return False
        self._members.discard(self._entries[worst][2])
        self._entries[worst] = (float(reward), self._counter, key)
        self._members.add(key)
        self._counter += 1
        return True

    def items(self) -> list[tuple[tuple[int, ...], float]]:
        """(traversal, reward) pairs, best first."""
        ordered = sorted(self._entries, key=lambda e: (-e[0], e[1]))
        return [(ids, r) for r, _, ids in ordered]


def empirical_quantile(rewards, epsilon: float) -> float:
    """The ceil((1 - eps) N)-th order statistic, no interpolation.

    Taking the lower bracketing value guarantees at least ceil(eps N) samples
    sit at or above the returned threshold.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    n = rewards.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rewards")
    k = math.ceil((1.0 - epsilon) * n)
    return float(np.partition(rewards, k - 1)[k - 1])


def vpg_weights(rewards, baseline: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    return (rewards - baseline) / rewards.shape[0]


def rspg_weights(rewards, epsilon: float):
    """Per-sample weights (R - R_eps) 1{R >= R_eps} / (eps N).

    Returns (weights, r_eps, retained_mask); ties at the threshold are
    retained, so the retained set can exceed eps N samples.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    r_eps = empirical_quantile(rewards, epsilon)
    retained = rewards >= r_eps
    weights = np.where(retained, rewards - r_eps, 0.0) / (epsilon * rewards.shape[0])
    return weights, r_eps, retained


def vpg_gradient(params, batch: SampleBatch, baseline: float, adjusters, lib) -> np.ndarray:
    """(1/N) sum (R_i - b) grad log p(tau_i)."""
    weights = vpg_weights(batch.rewards, baseline)
    grad, _, _, _ = batch_gradient(params, lib, batch.traversals, adjusters, weights)
    return grad


def rspg_gradient(params, batch: SampleBatch, epsilon: float, adjusters, lib):
    """Quantile-thresholded gradient; returns (grad, r_eps, retained_mask)."""
    weights, r_eps, retained = rspg_weights(batch.rewards, epsilon)
    idx = np.flatnonzero(retained)
    traversals = [batch.traversals[i] for i in idx]
    grad, _, _, _ = batch_gradient(params, lib, traversals, adjusters, weights[idx])
    return grad, r_eps, retained


def pqt_gradient(params, queue: TopKQueue, adjusters, lib) -> np.ndarray:
    """Mean of grad log p over the queue entries; zero for an empty queue."""
    items = queue.items()
    if not items:
        return np.zeros(params.n_params)
    traversals = [ids for ids, _ in items]
    weights = np.full(len(items), 1.0 / len(items))
    grad, _, _, _ = batch_gradient(params, lib, traversals, adjusters, weights)
    return grad


def entropy_gradient(params, traversals, coef: float, adjusters, lib) -> np.ndarray:
    """Gradient of coef * mean_i (summed per-step entropy of traversal i)."""
    if coef == 0.0 or not traversals:
        return np.zeros(params.n_params)
    ew = np.full(len(traversals), coef / len(traversals))
    grad, _, _, _ = batch_gradient(
        params, lib, traversals, adjusters, np.zeros(len(traversals)), entropy_weights=ew
    )
    return grad


class AdamOptimizer:
    """Adam on an ascent direction: params += step(gradient)."""

    def __init__(self, n_params: int, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SgdOptimizer:
    """Plain first-order ascent with a fixed step size."""

    def __init__(self, learning_rate: float):
        self.lr = learning_rate

    def step(self, grad: np.ndarray) -> np.ndarray:
        return self.lr * grad


def make_optimizer(config: TrainerConfig, n_params: int):
    if config.optimizer == "adam":
        return AdamOptimizer(n_params, config.learning_rate)
    return SgdOptimizer(config.learning_rate)


class PolicyUpdater:
    """One gradient step per batch, per the configured objective.

    Owns the optimizer state, the vpg baseline, and the pqt queue so that the
    plain loop and the GP hybrid share identical update mechanics.
    """

    def __init__(self, config: TrainerConfig, lib: TokenLibrary, adjusters,
                 params: PolicyParams):
        self.config = config
        self.lib = lib
        self.adjusters = adjusters
        self.params = params
        self.optimizer = make_optimizer(config, params.n_params)
        self.baseline = 0.0
        self.queue = TopKQueue(config.queue_size)

    def apply(self, traversals, rewards, on_unreachable: str = "raise") -> dict:
        """Compute the objective + entropy gradient and step the parameters.

        Returns bookkeeping: the quantile (rspg), number of dropped
        (unreachable) sequences, and gradient norm.
        """
        cfg = self.config
        rewards = np.asarray(rewards, dtype=np.float64)
        n = len(traversals)
        info: dict = {"dropped": 0}
        if cfg.kind == "rspg":
            weights, r_eps, retained = rspg_weights(rewards, cfg.epsilon)
            idx = np.flatnonzero(retained)
            kept = [traversals[i] for i in idx]
            # Entropy bonus is averaged over the same retained set the
            # objective uses, mirroring the quantile-filtered batch update.
            ew = np.full(len(kept), cfg.entropy_coef / len(kept))
            grad, _, _, dropped = batch_gradient(
                self.params, self.lib, kept, self.adjusters, weights[idx],
                entropy_weights=ew, on_unreachable=on_unreachable,
            )
            info.update(r_eps=r_eps, retained=int(retained.sum()), dropped=len(dropped))
        elif cfg.kind == "vpg":
            weights = vpg_weights(rewards, self.baseline)
            ew = np.full(n, cfg.entropy_coef / n)
            grad, _, _, dropped = batch_gradient(
                self.params, self.lib, traversals, self.adjusters, weights,
                entropy_weights=ew, on_unreachable=on_unreachable,
            )
            # EWMA baseline over batch means, updated after the gradient.
            self.baseline = (
                cfg.baseline_decay * self.baseline
                + (1.0 - cfg.baseline_decay) * float(rewards.mean())
            )
            info.update(baseline=self.baseline, dropped=len(dropped))
        else:  # pqt
            for ids, r in zip(traversals, rewards):
                self.queue.insert(ids, float(r))
            grad = pqt_gradient(self.params, self.queue, self.adjusters, self.lib)
            if cfg.entropy_coef != 0.0:
                ew = np.full(n, cfg.entropy_coef / n)
                ent_grad, _, _, dropped = batch_gradient(
                    self.params, self.lib, traversals, self.adjusters,
                    np.zeros(n), entropy_weights=ew, on_unreachable=on_unreachable,
                )
                grad = grad + ent_grad
                info["dropped"] = len(dropped)
            info["queue_min"] = self.queue.min_reward
        self.params.set_flat(self.params.to_flat() + self.optimizer.step(grad))
        info["grad_norm"] = float(np.linalg.norm(grad))
        return info


@dataclass
class TraceRow:
    iteration: int
    evals: int
    mean_reward: float
    top_eps_mean: float
    best_reward: float
    invalid_frac: float

    CSV_HEADER = ("iter", "evals", "mean_R", "top_eps_mean_R", "best_R", "invalid_frac")

    def as_csv_row(self):
        return (
            self.iteration, self.evals,
            f"{self.mean_reward:.6f}", f"{self.top_eps_mean:.6f}",
            f"{self.best_reward:.6f}", f"{self.invalid_frac:.4f}",
        )


@dataclass
class RunResult:
    best_ids: tuple[int, ...] | None
    best_reward: float
    best_const_values: tuple[float, ...]
    trace: list[TraceRow] = field(default_factory=list)
    candidates: int = 0
    const_evals: int = 0
    iterations: int = 0
    stopped_early: bool = False
    dropped_elites: int = 0

    @property
    def found(self) -> bool:
        return self.best_ids is not None


def train_loop(
    config: TrainerConfig,
    lib: TokenLibrary,
    dataset: Dataset,
    adjusters,
    rng: np.random.Generator,
    hidden_size: int = 32,
    max_len: int | None = None,
    const_budget: int = 200,
    evaluator: RewardEvaluator | None = None,
    params: PolicyParams | None = None,
    on_iteration=None,
) -> RunResult:
    """Sample / fit constants / score / update until the budget is consumed.

    `on_iteration`, when given, is called after every update with
    (iteration, evals_used, best_ids, best_reward, improved) and may return
    True to stop the run early. The best expression is the argmax-reward
    candidate ever scored, with ties keeping the earliest.
    """
    config.validate()
    if evaluator is None:
        evaluator = RewardEvaluator(dataset, lib, const_budget, rng)
    if params is None:
        params = init_policy(hidden_size, lib, seed=int(rng.integers(2**31)))
    updater = PolicyUpdater(config, lib, adjusters, params)
    result = RunResult(None, float("-inf"), ())
    while evaluator.candidates < config.max_evaluations:
        batch = sample_batch(params, lib, adjusters, rng, config.batch_size, max_len)
        scored = [evaluator(t) for t in batch.traversals]
        rewards = np.array([s.value for s in scored])
        batch.rewards = rewards
        improved = False
        top = int(np.argmax(rewards))
        if rewards[top] > result.best_reward:
            result.best_reward = float(rewards[top])
            result.best_ids = batch.traversals[top]
            result.best_const_values = scored[top].const_values
            improved = True
        updater.apply(batch.traversals, rewards)
        result.iterations += 1
        result.trace.append(
            TraceRow(
                iteration=result.iterations,
                evals=evaluator.candidates,
                mean_reward=float(rewards.mean()),
                top_eps_mean=float(rewards[rewards >= empirical_quantile(rewards, config.epsilon)].mean())
                if len(rewards) >= 2 else float(rewards.mean()),
                best_reward=result.best_reward,
                invalid_frac=float(np.mean([s.invalid for s in scored])),
            )
        )
        if on_iteration is not None and on_iteration(
            result.iterations, evaluator.candidates, result.best_ids,
            result.best_reward, improved,
        ):
            result.stopped_early = True
            break
    result.candidates = evaluator.candidates
    result.const_evals = evaluator.const_evals
    return result
