"""Numeric evaluation of expressions over datasets.

Operators are unprotected on purpose: log of a negative, division by zero,
or overflow make the whole evaluation return the distinguished INVALID value
rather than raising, because the invalid-expression rate is a tracked metric.
"""

from __future__ import annotations

import numpy as np

from ._backend import kernels
from .errors import IncompleteTraversalError
from .tokens import OP_CONST, OP_LIT, OP_VAR, TokenLibrary
from .traversal import ExpressionTree, is_complete, to_traversal


class _Invalid:
    """Singleton marking a non-finite evaluation; falsy and countable."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Invalid"

    def __bool__(self):
        return False


INVALID = _Invalid()


def is_invalid(result) -> bool:
    return result is INVALID


def _node_arrays(ids, lib: TokenLibrary, const_values):
    """Per-node opcode/iarg/farg arrays for the evaluation kernel."""
    ids_arr = np.asarray(ids, dtype=np.intp)
    opcodes = lib.opcodes[ids_arr]
    iargs = np.where(lib.var_indices[ids_arr] >= 0, lib.var_indices[ids_arr], 0)
    fargs = lib.literal_values[ids_arr]
    if lib.const_id >= 0:
        const_pos = np.flatnonzero(ids_arr == lib.const_id)
        if const_pos.size:
            if const_values is None or len(const_values) < const_pos.size:
                raise ValueError("missing value for const placeholder")
            fargs[const_pos] = np.asarray(const_values, dtype=np.float64)[: const_pos.size]
    return opcodes, np.ascontiguousarray(iargs, dtype=np.int32), fargs


def evaluate_ids(ids, lib: TokenLibrary, X, const_values=None):
    """Evaluate a complete traversal on an (N, d) input matrix.

    Returns an N-vector of float64, or INVALID if any entry is non-finite.
    """
    if not is_complete(ids, lib):
        raise IncompleteTraversalError("cannot evaluate an incomplete traversal")
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (points x variables)")
    opcodes, iargs, fargs = _node_arrays(ids, lib, const_values)
    out = np.empty(X.shape[0], dtype=np.float64)
    bad = kernels.eval_prefix(opcodes, iargs, fargs, X, out)
    return INVALID if bad else out


def evaluate(tree: ExpressionTree, X, lib: TokenLibrary | None = None):
    """Evaluate an expression tree on an (N, d) input matrix.

    Constant placeholders read their values from tree.const_values in
    pre-order occurrence order.
    """
    ids = to_traversal(tree)
    if lib is None:
        lib = _tree_library(tree)
    return evaluate_ids(ids, lib, X, const_values=tree.const_values)


def _tree_library(tree: ExpressionTree) -> TokenLibrary:
    """Reconstruct a usable library from the tokens stored in a tree.

    Token ids inside a tree always refer to the library they came from, so
    collecting the distinct tokens by id is enough for evaluation.
    """
    found = {}

    def walk(node):
        found[node.token.id] = node.token
        for c in node.children:
            walk(c)

    walk(tree)
    max_id = max(found)
    from .tokens import Token, TokenKind

    tokens = []
    for i in range(max_id + 1):
        if i in found:
            tokens.append(found[i])
        else:  # pad unused slots with throwaway literals to keep ids aligned
            tokens.append(Token(i, f"_pad{i}", 0, TokenKind.LITERAL, OP_LIT, value=0.0))
    return TokenLibrary(tokens)
