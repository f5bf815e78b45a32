"""Inner optimization of constant-placeholder values against a dataset.

Quasi-Newton (L-BFGS-B) descent on the NMSE with finite-difference gradients,
multi-started from all-ones and one uniform draw in [-5, 5]; the better start
wins. Non-finite objectives are treated as +inf and constants are box-bounded
to |beta| <= 1e6 so overflow regions cannot trap the line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .evaluate import INVALID, evaluate_ids
from .tokens import TokenLibrary
from .traversal import count_const

CONST_BOUND = 1e6


@dataclass
class ConstFitResult:
    values: np.ndarray      # fitted constants, pre-order placeholder order
    final_nmse: float
    n_evals: int            # objective evaluations actually performed
    converged: bool


def optimize_constants(
    ids,
    dataset,
    lib: TokenLibrary,
    budget: int = 200,
    rng: np.random.Generator | None = None,
) -> ConstFitResult:
    """Fit the constants of a complete traversal by NMSE minimization.

    With no placeholders this costs exactly one NMSE computation. Failure to
    converge is not an error: the best values found are returned with
    converged=False.
    """
    k = count_const(ids, lib)
    X, y = dataset.X, dataset.y
    y_var = float(np.var(y))
    n_evals = 0

    def objective(beta):
        nonlocal n_evals
        n_evals += 1
        y_hat = evaluate_ids(ids, lib, X, const_values=beta)
        if y_hat is INVALID:
            return np.inf
        value = float(np.mean((y_hat - y) ** 2) / y_var)
        return value if np.isfinite(value) else np.inf

    if k == 0:
        nmse = objective(())
        return ConstFitResult(np.zeros(0), nmse, n_evals, converged=np.isfinite(nmse))

    if rng is None:
        rng = np.random.default_rng(0)
    starts = [np.ones(k), rng.uniform(-5.0, 5.0, k)]
    per_start = max(budget // len(starts), 2)
    bounds = [(-CONST_BOUND, CONST_BOUND)] * k

    best_values, best_nmse, best_ok = starts[0], np.inf, False
    for start in starts:
        res = minimize(
            objective,
            start,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxfun": per_start, "eps": 1e-7},
        )
        value = float(res.fun) if np.isfinite(res.fun) else np.inf
        if value < best_nmse:
            best_values, best_nmse, best_ok = np.asarray(res.x), value, bool(res.success)
    return ConstFitResult(best_values, best_nmse, n_evals, converged=best_ok and np.isfinite(best_nmse))
