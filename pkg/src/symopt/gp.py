"""Genetic-programming inner loop seeded from the policy's sample batches.

Each outer iteration the freshly sampled batch becomes the GP starting
population (GP keeps no state across iterations, so it restarts every time).
After S generations of tournament selection, subtree crossover, and four
mutation kinds drawn with equal probability, the best M individuals produced
by the evolution join the policy batch as extra training sequences. Offspring
must satisfy the same hard constraints as sampled sequences: the random parts
of a variation are re-drawn up to `repair_attempts` times and the parent is
copied through unchanged when repair fails.

All variation operates directly on pre-order id tuples via subtree spans; no
tree objects are built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .policy import SampleBatch, sample_batch
from .tokens import TokenLibrary
from .train import (
    PolicyUpdater,
    RunResult,
    TraceRow,
    TrainerConfig,
    empirical_quantile,
)
from .traversal import random_complete, subtree_span

MUTATION_KINDS = ("point", "subtree_insert", "subtree_delete", "subtree_replace")


@dataclass
class GPConfig:
    enabled: bool = False
    generations: int = 25       # S
    elites: int = 25            # M
    tournament_size: int = 5
    crossover_prob: float = 0.5
    mutation_prob: float = 0.5
    repair_attempts: int = 8

    def validate(self) -> None:
        if self.generations < 0:
            raise ConfigError("gp.generations must be >= 0", "gp.generations")
        if self.elites < 0:
            raise ConfigError("gp.elites must be >= 0", "gp.elites")
        if self.tournament_size < 1:
            raise ConfigError("gp.tournament_size must be >= 1", "gp.tournament_size")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"gp.{name} must lie in [0, 1]", f"gp.{name}")
        if self.repair_attempts < 1:
            raise ConfigError("gp.repair_attempts must be >= 1", "gp.repair_attempts")


@dataclass
class Population:
    traversals: list[tuple[int, ...]]
    rewards: np.ndarray

    def __len__(self):
        return len(self.traversals)


def seed_population(batch: SampleBatch) -> Population:
    """The GP start population is exactly the policy's batch, rewards included."""
    if batch.rewards is None:
        raise ValueError("batch must be scored before seeding a population")
    return Population(list(batch.traversals), np.asarray(batch.rewards, dtype=np.float64).copy())


def _tournament(pop: Population, rng: np.random.Generator, k: int) -> tuple[int, ...]:
    contenders = rng.integers(len(pop), size=min(k, len(pop)))
    best = max(contenders, key=lambda i: pop.rewards[i])
    return pop.traversals[best]


def crossover(a, b, lib: TokenLibrary, rng: np.random.Generator) -> tuple[int, ...]:
    """Swap a uniformly random subtree of `a` for one of `b`."""
    i = int(rng.integers(len(a)))
    j = int(rng.integers(len(b)))
    si = subtree_span(a, lib, i)
    sj = subtree_span(b, lib, j)
    return a[:i] + b[j:j + sj] + a[i + si:]


def point_mutation(ids, lib: TokenLibrary, rng: np.random.Generator) -> tuple[int, ...]:
    """Replace one node by a random different token of the same arity."""
    pos = int(rng.integers(len(ids)))
    arity = lib.arity_of(ids[pos])
    options = [t.id for t in lib if t.arity == arity and t.id != ids[pos]]
    if not options:
        return tuple(ids)
    new = options[int(rng.integers(len(options)))]
    return ids[:pos] + (new,) + ids[pos + 1:]


def subtree_insert(ids, lib: TokenLibrary, rng: np.random.Generator,
                   max_len: int = 30) -> tuple[int, ...]:
    """Wrap a random subtree in a new operator; binary gets a terminal sibling."""
    operators = [t.id for t in lib if t.arity > 0]
    terminals = [t.id for t in lib if t.arity == 0]
    if not operators:
        return tuple(ids)
    pos = int(rng.integers(len(ids)))
    span = subtree_span(ids, lib, pos)
    op = operators[int(rng.integers(len(operators)))]
    sub = ids[pos:pos + span]
    if lib.arity_of(op) == 1:
        grafted = (op,) + sub
    else:
        term = terminals[int(rng.integers(len(terminals)))]
        if rng.random() < 0.5:
            grafted = (op,) + sub + (term,)
        else:
            grafted = (op, term) + sub
    return ids[:pos] + grafted + ids[pos + span:]


def subtree_delete(ids, lib: TokenLibrary, rng: np.random.Generator) -> tuple[int, ...]:
    """Hoist a random child subtree over its operator parent."""
    internal = [i for i in range(len(ids)) if lib.arity_of(ids[i]) > 0]
    if not internal:
        return tuple(ids)
    pos = internal[int(rng.integers(len(internal)))]
    arity = lib.arity_of(ids[pos])
    first = pos + 1
    first_span = subtree_span(ids, lib, first)
    if arity == 1 or rng.random() < 0.5:
        child = ids[first:first + first_span]
    else:
        second = first + first_span
        child = ids[second:second + subtree_span(ids, lib, second)]
    total = subtree_span(ids, lib, pos)
    return ids[:pos] + child + ids[pos + total:]


def subtree_replace(ids, lib: TokenLibrary, rng: np.random.Generator,
                    max_len: int = 30) -> tuple[int, ...]:
    """Regrow a random subtree within the remaining length budget."""
    pos = int(rng.integers(len(ids)))
    span = subtree_span(ids, lib, pos)
    budget = max(max_len - (len(ids) - span), 1)
    fresh = random_complete(lib, rng, max_len=budget)
    return ids[:pos] + fresh + ids[pos + span:]


def _mutate(ids, lib, rng, kind: str, max_len: int) -> tuple[int, ...]:
    if kind == "point":
        return point_mutation(ids, lib, rng)
    if kind == "subtree_insert":
        return subtree_insert(ids, lib, rng, max_len)
    if kind == "subtree_delete":
        return subtree_delete(ids, lib, rng)
    return subtree_replace(ids, lib, rng, max_len)


def gp_generation(
    pop: Population,
    lib: TokenLibrary,
    rng: np.random.Generator,
    config: GPConfig,
    validator,
    max_len: int = 30,
) -> list[tuple[int, ...]]:
    """Produce one offspring generation (unscored traversals).

    `validator` decides constraint conformance of complete traversals; an
    offspring failing it has its random choices re-drawn up to
    config.repair_attempts times before falling back to the selected parent.
    """
    offspring: list[tuple[int, ...]] = []
    for _ in range(len(pop)):
        parent = _tournament(pop, rng, config.tournament_size)
        child = parent
        for _attempt in range(config.repair_attempts):
            candidate = parent
            if rng.random() < config.crossover_prob:
                mate = _tournament(pop, rng, config.tournament_size)
                candidate = crossover(candidate, mate, lib, rng)
            if rng.random() < config.mutation_prob:
                kind = MUTATION_KINDS[int(rng.integers(len(MUTATION_KINDS)))]
                candidate = _mutate(candidate, lib, rng, kind, max_len)
            if validator(candidate):
                child = candidate
                break
        offspring.append(child)
    return offspring


def hybrid_loop(
    trainer_config: TrainerConfig,
    gp_config: GPConfig,
    lib: TokenLibrary,
    dataset,
    adjusters,
    rng: np.random.Generator,
    validator,
    hidden_size: int = 32,
    max_len: int | None = None,
    const_budget: int = 200,
    evaluator=None,
    params=None,
    on_iteration=None,
) -> RunResult:
    """Outer loop with the GP inner stage between sampling and the update.

    Per iteration: sample N, score, evolve S generations from that batch,
    collect the top-M individuals seen during the evolution, and train on the
    N + M combined sequences. Every GP fitness evaluation is charged against
    the same candidate budget as sampled expressions. With S=0 or M=0 this
    degenerates to the plain training loop.
    """
    from .policy import init_policy
    from .reward import RewardEvaluator

    trainer_config.validate()
    gp_config.validate()
    if evaluator is None:
        evaluator = RewardEvaluator(dataset, lib, const_budget, rng)
    if params is None:
        params = init_policy(hidden_size, lib, seed=int(rng.integers(2**31)))
    updater = PolicyUpdater(trainer_config, lib, adjusters, params)
    result = RunResult(None, float("-inf"), ())
    cap = max_len if max_len is not None else 30
    while evaluator.candidates < trainer_config.max_evaluations:
        batch = sample_batch(params, lib, adjusters, rng, trainer_config.batch_size, max_len)
        scored = [evaluator(t) for t in batch.traversals]
        rewards = np.array([s.value for s in scored])
        batch.rewards = rewards
        invalid_frac = float(np.mean([s.invalid for s in scored]))

        pop = seed_population(batch)
        hall: dict[tuple[int, ...], float] = {}
        hall_order: dict[tuple[int, ...], int] = {}
        for _gen in range(gp_config.generations):
            if evaluator.candidates >= trainer_config.max_evaluations:
                break
            offspring = gp_generation(pop, lib, rng, gp_config, validator, cap)
            off_rewards = np.array([evaluator(t).value for t in offspring])
            pop = Population(offspring, off_rewards)
            for t, r in zip(offspring, off_rewards):
                if t not in hall:
                    hall[t] = float(r)
                    hall_order[t] = len(hall_order)

        elites = sorted(hall, key=lambda t: (-hall[t], hall_order[t]))[: gp_config.elites]
        elite_rewards = [hall[t] for t in elites]

        combined = list(batch.traversals) + list(elites)
        combined_rewards = np.concatenate([rewards, np.array(elite_rewards)]) \
            if elites else rewards
        best = int(np.argmax(combined_rewards))
        improved = False
        if combined_rewards[best] > result.best_reward:
            result.best_reward = float(combined_rewards[best])
            result.best_ids = combined[best]
            if best < len(scored):
                result.best_const_values = scored[best].const_values
            else:
                result.best_const_values = ()
            improved = True
        info = updater.apply(combined, combined_rewards, on_unreachable="drop")
        result.dropped_elites += info.get("dropped", 0)
        result.iterations += 1
        result.trace.append(
            TraceRow(
                iteration=result.iterations,
                evals=evaluator.candidates,
                mean_reward=float(combined_rewards.mean()),
                top_eps_mean=float(
                    combined_rewards[
                        combined_rewards >= empirical_quantile(combined_rewards, trainer_config.epsilon)
                    ].mean()
                ) if len(combined_rewards) >= 2 else float(combined_rewards.mean()),
                best_reward=result.best_reward,
                invalid_frac=invalid_frac,
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
