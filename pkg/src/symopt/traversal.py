"""Pre-order token sequences and their expression trees.

A traversal is a tuple of token ids listing a binary expression tree in
pre-order (depth-first, left child before right). Completeness is an arity
count: starting from one open slot, each token consumes a slot and opens
`arity` new ones; the sequence is complete exactly when the open count first
reaches zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteTraversalError, UnknownTokenError
from .tokens import INFIX_SYMBOLS, OP_CONST, OP_LIT, OP_VAR, Token, TokenKind, TokenLibrary

Traversal = tuple[int, ...]


def _check_ids(ids, lib: TokenLibrary) -> None:
    for tid in ids:
        if not 0 <= tid < lib.size:
            raise UnknownTokenError(f"token id {tid} out of range [0, {lib.size})")


def dangling_after(ids, lib: TokenLibrary) -> int:
    """Open slots remaining after consuming `ids` (1 for the empty prefix)."""
    _check_ids(ids, lib)
    d = 1
    for tid in ids:
        d += int(lib.arities[tid]) - 1
    return d


def is_valid_prefix(ids, lib: TokenLibrary) -> bool:
    """True iff the open-slot count stays >= 1 at every position."""
    _check_ids(ids, lib)
    d = 1
    for tid in ids:
        if d < 1:
            return False
        d += int(lib.arities[tid]) - 1
    return d >= 0


def is_complete(ids, lib: TokenLibrary) -> bool:
    """True iff open slots hit exactly 0 at the last token and never before."""
    if len(ids) == 0:
        return False
    ids_arr = np.asarray(ids, dtype=np.intp)
    if ids_arr.min() < 0 or ids_arr.max() >= lib.size:
        raise UnknownTokenError(f"token id out of range [0, {lib.size})")
    profile = 1 + np.cumsum(lib.arities[ids_arr].astype(np.int64) - 1)
    return profile[-1] == 0 and (profile[:-1] >= 1).all()


def subtree_span(ids, lib: TokenLibrary, start: int) -> int:
    """Length of the subtree rooted at position `start` in a pre-order listing."""
    d = 1
    for k in range(start, len(ids)):
        d += int(lib.arities[ids[k]]) - 1
        if d == 0:
            return k - start + 1
    raise IncompleteTraversalError(f"no complete subtree at position {start}")


class PrefixState:
    """Incremental stack machine over a growing prefix.

    Tracks the open (unfinished) operator nodes so that the parent and left
    sibling of the next slot, the open-slot count, and the set of open
    ancestors are all O(1)-ish per pushed token. This is the reference
    implementation mirrored by the batched sampling kernels.
    """

    __slots__ = ("lib", "length", "dangling", "_tok", "_filled", "_last", "ids")

    def __init__(self, lib: TokenLibrary):
        self.lib = lib
        self.length = 0
        self.dangling = 1
        self.ids: list[int] = []
        self._tok: list[int] = []     # open node token ids, root-first
        self._filled: list[int] = []  # children completed per open node
        self._last: list[int] = []    # root token of last completed child

    @classmethod
    def from_prefix(cls, ids, lib: TokenLibrary) -> "PrefixState":
        state = cls(lib)
        for tid in ids:
            state.push(tid)
        return state

    @property
    def complete(self) -> bool:
        return self.length > 0 and self.dangling == 0

    def push(self, token_id: int) -> None:
        if self.complete:
            raise IncompleteTraversalError("cannot extend a complete traversal")
        arity = self.lib.arity_of(token_id)
        self.ids.append(token_id)
        self.length += 1
        self.dangling += arity - 1
        if arity > 0:
            self._tok.append(token_id)
            self._filled.append(0)
            self._last.append(-1)
            return
        # terminal: bubble completed subtrees up through the open stack
        root = token_id
        while self._tok:
            self._filled[-1] += 1
            self._last[-1] = root
            if self._filled[-1] == self.lib.arity_of(self._tok[-1]):
                root = self._tok.pop()
                self._filled.pop()
                self._last.pop()
            else:
                return

    def parent_id(self) -> int:
        """Token id of the next slot's parent, or the library empty marker."""
        return self._tok[-1] if self._tok else self.lib.empty_id

    def sibling_id(self) -> int:
        """Root token id of the next slot's completed left sibling, or empty."""
        if self._tok and self._filled[-1] >= 1:
            return self._last[-1]
        return self.lib.empty_id

    def open_ancestors(self) -> tuple[int, ...]:
        """Token ids of all unfinished operators above the next slot."""
        return tuple(self._tok)

    def trig_open(self) -> int:
        return sum(int(self.lib.is_trig[t]) for t in self._tok)


def parent_sibling(prefix, lib: TokenLibrary) -> tuple[Token | None, Token | None]:
    """Parent and left sibling of the next slot; None marks an empty position.

    The prefix must be valid and incomplete (a complete traversal has no next
    slot).
    """
    _check_ids(prefix, lib)
    if not is_valid_prefix(prefix, lib):
        raise IncompleteTraversalError("not a valid prefix")
    state = PrefixState.from_prefix(prefix, lib)
    if state.complete:
        raise IncompleteTraversalError("traversal is complete; no next slot")
    pid, sid = state.parent_id(), state.sibling_id()
    parent = None if pid == lib.empty_id else lib[pid]
    sibling = None if sid == lib.empty_id else lib[sid]
    return parent, sibling


@dataclass(frozen=True)
class ExpressionTree:
    """Binary expression tree; child count always equals the node's arity."""

    token: Token
    children: tuple["ExpressionTree", ...] = ()
    const_values: tuple[float, ...] | None = None  # meaningful at the root

    def __post_init__(self):
        if len(self.children) != self.token.arity:
            raise ValueError(
                f"{self.token.symbol}: arity {self.token.arity} != "
                f"{len(self.children)} children"
            )


def to_tree(ids, lib: TokenLibrary, const_values=None) -> ExpressionTree:
    """Reconstruct the expression tree of a complete traversal."""
    if not is_complete(ids, lib):
        raise IncompleteTraversalError(f"traversal {ids!r} is not complete")
    pos = 0

    def build() -> ExpressionTree:
        nonlocal pos
        tok = lib[ids[pos]]
        pos += 1
        children = tuple(build() for _ in range(tok.arity))
        return ExpressionTree(tok, children)

    root = build()
    if const_values is not None:
        root = ExpressionTree(root.token, root.children, tuple(float(v) for v in const_values))
    return root


def to_traversal(tree: ExpressionTree) -> Traversal:
    """Pre-order token ids of a tree; inverse of to_tree."""
    out: list[int] = []

    def walk(node: ExpressionTree) -> None:
        out.append(node.token.id)
        for child in node.children:
            walk(child)

    walk(tree)
    return tuple(out)


def count_const(ids, lib: TokenLibrary) -> int:
    if lib.const_id < 0:
        return 0
    return sum(1 for tid in ids if tid == lib.const_id)


def random_complete(
    lib: TokenLibrary,
    rng: np.random.Generator,
    max_len: int = 30,
    min_len: int = 1,
) -> Traversal:
    """Uniform-per-step random complete traversal within the length budget.

    At each slot, tokens whose arity would make completion within max_len
    impossible are excluded, so the walk always terminates in bounds. When the
    expression would close below min_len, terminals are excluded (provided an
    operator is still affordable).
    """
    ids: list[int] = []
    length, dangling = 0, 1
    arities = lib.arities
    all_ids = np.arange(lib.size)
    while dangling > 0:
        affordable = length + dangling + arities <= max_len
        if dangling == 1 and length + 1 < min_len:
            non_terminal = arities > 0
            if np.any(affordable & non_terminal):
                affordable &= non_terminal
        choices = all_ids[affordable]
        if choices.size == 0:
            raise ValueError(f"no token fits within max_len={max_len}")
        tid = int(choices[rng.integers(choices.size)])
        ids.append(tid)
        length += 1
        dangling += int(arities[tid]) - 1
    return tuple(ids)


def render_infix(ids, lib: TokenLibrary, const_values=None) -> str:
    """Fully parenthesized infix string; unary operators as name(arg)."""
    if not is_complete(ids, lib):
        raise IncompleteTraversalError("can only render complete traversals")
    const_iter = iter(const_values or ())
    pos = 0

    def emit() -> str:
        nonlocal pos
        tok = lib[ids[pos]]
        pos += 1
        if tok.opcode == OP_VAR:
            return tok.symbol
        if tok.opcode == OP_LIT:
            return tok.symbol
        if tok.opcode == OP_CONST:
            value = next(const_iter, None)
            return "const" if value is None else repr(float(value))
        if tok.arity == 1:
            return f"{tok.symbol}({emit()})"
        left = emit()
        right = emit()
        op = INFIX_SYMBOLS.get(tok.opcode, tok.symbol)
        return f"({left} {op} {right})"

    return emit()
