"""Throughput comparison of the compiled and pure-Python kernel backends.

Times the two hot paths behind both backends: traversal evaluation over a
dataset, and full constrained batch sampling (mask computation + state
advance dominate the Python fallback). Run after `pip install -e .`:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import symopt
from symopt import build_adjusters, init_policy, make_library, random_complete
from symopt._backend import kernels, kernels_py
from symopt.evaluate import _node_arrays


def time_eval(module, traversals, lib, X, repeats=5):
    prepared = [_node_arrays(ids, lib, None) for ids in traversals]
    out = np.empty(X.shape[0])
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for opcodes, iargs, fargs in prepared:
            module.eval_prefix(opcodes, iargs, fargs, X, out)
        best = min(best, time.perf_counter() - start)
    return len(traversals) / best


def time_sampling(module, lib, adjusters, params, batch=1000, repeats=3):
    original = symopt.policy.kernels
    symopt.policy.kernels = module
    try:
        best = float("inf")
        for seed in range(repeats):
            rng = np.random.default_rng(seed)
            start = time.perf_counter()
            symopt.policy.sample_batch(params, lib, adjusters, rng, batch, max_len=30)
            best = min(best, time.perf_counter() - start)
    finally:
        symopt.policy.kernels = original
    return batch / best


def main():
    if kernels.BACKEND == kernels_py.BACKEND:
        print("compiled backend unavailable; nothing to compare")
        return
    lib = make_library(("add", "sub", "mul", "div", "sin", "cos", "exp", "log"), 2)
    rng = np.random.default_rng(0)
    traversals = [random_complete(lib, rng, max_len=30, min_len=4) for _ in range(5000)]
    X = np.ascontiguousarray(rng.uniform(-1.0, 1.0, size=(20, 2)))
    adjusters = build_adjusters(("length", "no_const_children", "inverse", "trig"),
                                lib, 4, 30)
    params = init_policy(32, lib, seed=0)

    rows = []
    for module in (kernels, kernels_py):
        eval_rate = time_eval(module, traversals, lib, X)
        sample_rate = time_sampling(module, lib, adjusters, params)
        rows.append((module.BACKEND, eval_rate, sample_rate))

    print(f"{'backend':<10} {'eval expr/s':>14} {'sample seq/s':>14}")
    for backend, ev, sa in rows:
        print(f"{backend:<10} {ev:>14,.0f} {sa:>14,.0f}")
    fast, slow = rows[0], rows[1]
    print(f"\nspeedup: eval x{fast[1] / slow[1]:.1f}, sampling x{fast[2] / slow[2]:.1f}")


if __name__ == "__main__":
    main()
