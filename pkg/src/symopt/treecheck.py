"""Whole-traversal constraint validation by direct tree inspection.

This is the independent check used to audit sampled sequences and to accept
or reject GP offspring. It deliberately shares no code with the incremental
masking state machine: the traversal is parsed into a tree and each rule is
verified by explicit recursion, so a bug in one path cannot hide in the
other.
"""

from __future__ import annotations

from .tokens import INVERSE_UNARY_PAIRS, TRIG_OPERATORS, TokenKind, TokenLibrary
from .traversal import ExpressionTree, is_complete, to_tree


def scan_violations(
    ids,
    lib: TokenLibrary,
    min_len: int = 4,
    max_len: int = 30,
    rules=("length", "no_const_children", "inverse", "trig"),
) -> list[str]:
    """Return human-readable violations of the named rules (empty = valid)."""
    violations: list[str] = []
    if not is_complete(ids, lib):
        return ["incomplete traversal"]
    if "length" in rules:
        if len(ids) < min_len:
            violations.append(f"length {len(ids)} < min {min_len}")
        if len(ids) > max_len:
            violations.append(f"length {len(ids)} > max {max_len}")
    tree = to_tree(ids, lib)
    if "no_const_children" in rules:
        _scan_const_children(tree, violations)
    if "inverse" in rules:
        _scan_inverse(tree, violations)
    if "trig" in rules:
        _scan_trig(tree, inside_trig=False, violations=violations)
    return violations


def is_constraint_valid(ids, lib, min_len=4, max_len=30, rules=("length", "no_const_children", "inverse", "trig")) -> bool:
    return not scan_violations(ids, lib, min_len, max_len, rules)


def _scan_const_children(node: ExpressionTree, violations: list[str]) -> None:
    if node.children:
        if all(c.token.kind is TokenKind.CONST_PLACEHOLDER for c in node.children):
            violations.append(f"all children of {node.token.symbol} are constants")
        for child in node.children:
            _scan_const_children(child, violations)


def _scan_inverse(node: ExpressionTree, violations: list[str]) -> None:
    if node.token.arity == 1:
        blocked = INVERSE_UNARY_PAIRS.get(node.token.symbol)
        child = node.children[0]
        if blocked is not None and child.token.symbol == blocked:
            violations.append(f"{node.token.symbol}({child.token.symbol}(..))")
    for child in node.children:
        _scan_inverse(child, violations)


def _scan_trig(node: ExpressionTree, inside_trig: bool, violations: list[str]) -> None:
    is_trig = node.token.symbol in TRIG_OPERATORS
    if is_trig and inside_trig:
        violations.append(f"trig {node.token.symbol} below another trig operator")
    for child in node.children:
        _scan_trig(child, inside_trig or is_trig, violations)
