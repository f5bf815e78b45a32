"""Symbolic equivalence between candidate and ground-truth expressions.

Two stages. The algebraic stage canonicalizes the difference of the two
expressions: numeric atoms within 1e-9 of a simple rational are snapped to
it (constant folding with tolerance), the difference is expanded, flattened,
and collected over a polynomial-with-kernels normal form by the CAS, and
equivalence holds when the result is identically zero. When the algebraic
stage is inconclusive, a numeric fallback compares both expressions on 64
quasi-random points inside the training domain with max |delta| < 1e-10 and
no invalid evaluation. Numeric-only matches are labeled as such and reported
separately, never silently merged with canonical ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy
from scipy.stats import qmc

from .evaluate import INVALID, evaluate_ids
from .tokens import (
    OP_ADD, OP_CONST, OP_COS, OP_DIV, OP_EXP, OP_LIT, OP_LOG, OP_MUL, OP_POW,
    OP_SIN, OP_SQRT, OP_SQUARE, OP_SUB, OP_VAR, TokenLibrary,
)
from .traversal import is_complete

CONST_TOLERANCE = 1e-9
NUMERIC_TOLERANCE = 1e-10
NUMERIC_POINTS = 64
MAX_CANONICAL_OPS = 400


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    method: str | None  # "canonical", "numeric", or None

    def __bool__(self):
        return self.equivalent


def _snap_number(value: float):
    """Rational within CONST_TOLERANCE if one exists, else an exact Float."""
    if not np.isfinite(value):
        return None
    nearest_int = round(value)
    if abs(value - nearest_int) < CONST_TOLERANCE:
        return sympy.Integer(int(nearest_int))
    try:
        rat = sympy.nsimplify(value, tolerance=CONST_TOLERANCE, rational=True)
        if abs(float(rat) - value) < CONST_TOLERANCE:
            return rat
    except (ValueError, TypeError):
        pass
    return sympy.Float(value, 17)


def to_sympy(ids, lib: TokenLibrary, const_values=None, assumptions=None):
    """Convert a complete traversal to a sympy expression.

    `assumptions` maps variable index -> dict of sympy assumptions (e.g.
    {"positive": True}); defaults to real variables named x1..xd.
    """
    if not is_complete(ids, lib):
        raise ValueError("cannot convert an incomplete traversal")
    assumptions = assumptions or {}
    symbols = {}

    def symbol(index: int):
        if index not in symbols:
            opts = assumptions.get(index, {"real": True})
            symbols[index] = sympy.Symbol(f"x{index + 1}", **opts)
        return symbols[index]

    const_iter = iter(const_values or ())
    pos = 0

    def build():
        nonlocal pos
        tid = ids[pos]
        pos += 1
        op = int(lib.opcodes[tid])
        if op == OP_VAR:
            return symbol(int(lib.var_indices[tid]))
        if op == OP_LIT:
            return _snap_number(float(lib.literal_values[tid]))
        if op == OP_CONST:
            return _snap_number(float(next(const_iter)))
        if op == OP_SIN:
            return sympy.sin(build())
        if op == OP_COS:
            return sympy.cos(build())
        if op == OP_EXP:
            return sympy.exp(build())
        if op == OP_LOG:
            return sympy.log(build())
        if op == OP_SQRT:
            return sympy.sqrt(build())
        if op == OP_SQUARE:
            return build() ** 2
        left = build()
        right = build()
        if op == OP_ADD:
            return left + right
        if op == OP_SUB:
            return left - right
        if op == OP_MUL:
            return left * right
        if op == OP_DIV:
            return left / right
        if op == OP_POW:
            return left ** right
        raise ValueError(f"unknown opcode {op}")

    return build()


def _canonical_zero(diff) -> bool | None:
    """True/False when canonicalization decides; None when inconclusive."""
    try:
        if sympy.count_ops(diff) > MAX_CANONICAL_OPS:
            return None
        folded = sympy.expand(diff)
        if folded == 0:
            return True
        simplified = sympy.simplify(folded)
    except (sympy.SympifyError, ZeroDivisionError, RecursionError, TypeError):
        return None
    if simplified.has(sympy.nan, sympy.zoo, sympy.oo, -sympy.oo):
        return None  # degenerate subterms (log 0, 1/0): no canonical form
    if simplified == 0 or simplified.is_zero:
        return True
    if simplified.is_number:
        try:
            return bool(abs(complex(simplified)) < CONST_TOLERANCE)
        except (TypeError, ValueError):
            return None
    if simplified.is_zero is False and simplified.free_symbols == set():
        return False
    return None


def _domain_assumptions(domain) -> dict[int, dict]:
    out = {}
    for i, (low, _high) in enumerate(domain):
        # a zero lower bound still means positive in practice: datasets
        # resample rows where the truth is non-finite and probes stay
        # strictly inside the box
        out[i] = {"positive": True} if low >= 0 else {"real": True}
    return out


def _halton_points(domain, n_points: int) -> np.ndarray:
    lows = np.array([d[0] for d in domain])
    highs = np.array([d[1] for d in domain])
    sampler = qmc.Halton(d=len(domain), scramble=False)
    unit = sampler.random(n_points)
    # stay strictly inside the box so boundary singularities don't trip probes
    unit = 0.02 + 0.96 * unit
    return lows + unit * (highs - lows)


def check_equivalence(
    candidate_ids,
    candidate_lib: TokenLibrary,
    truth_ids,
    truth_lib: TokenLibrary,
    domain=None,
    candidate_consts=None,
    truth_consts=None,
) -> EquivalenceResult:
    """Two-stage equivalence check of candidate against ground truth.

    `domain` lists one (low, high) pair per input variable; it selects
    variable assumptions for the algebraic stage and the probe box for the
    numeric fallback. Defaults to (-1, 1) per variable.
    """
    d = max(candidate_lib.variable_count, truth_lib.variable_count)
    if domain is None:
        domain = [(-1.0, 1.0)] * d
    assumptions = _domain_assumptions(domain)
    verdict = None
    try:
        cand = to_sympy(candidate_ids, candidate_lib, candidate_consts, assumptions)
        truth = to_sympy(truth_ids, truth_lib, truth_consts, assumptions)
        verdict = _canonical_zero(cand - truth)
    except (ValueError, OverflowError):
        verdict = None
    if verdict is True:
        return EquivalenceResult(True, "canonical")
    if verdict is False:
        return EquivalenceResult(False, None)

    X = _halton_points(domain, NUMERIC_POINTS)
    y_cand = evaluate_ids(candidate_ids, candidate_lib, X, const_values=candidate_consts)
    y_truth = evaluate_ids(truth_ids, truth_lib, X, const_values=truth_consts)
    if y_cand is INVALID or y_truth is INVALID:
        return EquivalenceResult(False, None)
    if float(np.max(np.abs(y_cand - y_truth))) < NUMERIC_TOLERANCE:
        return EquivalenceResult(True, "numeric")
    return EquivalenceResult(False, None)


def symbolically_equivalent(
    candidate_ids, candidate_lib, truth_ids, truth_lib, domain=None,
    candidate_consts=None, truth_consts=None,
) -> bool:
    """Boolean form of check_equivalence (either stage counts)."""
    return check_equivalence(
        candidate_ids, candidate_lib, truth_ids, truth_lib, domain,
        candidate_consts, truth_consts,
    ).equivalent
