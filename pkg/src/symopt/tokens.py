"""Token vocabulary and libraries for expression sequences.

A token is an operator, an input variable, a numeric literal, or the constant
placeholder whose value is fitted later. A library is an ordered collection of
tokens; token ids are positions in that order. Libraries precompute flat numpy
views (arities, opcodes, flags) consumed by the evaluation and sampling
kernels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownTokenError


class TokenKind(enum.Enum):
    BINARY_OP = "binary-op"
    UNARY_OP = "unary-op"
    VARIABLE = "input-variable"
    LITERAL = "literal"
    CONST_PLACEHOLDER = "const-placeholder"


# Opcodes understood by the evaluation kernels.
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = 0, 1, 2, 3, 4
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SQRT, OP_SQUARE = 10, 11, 12, 13, 14, 15
OP_VAR, OP_LIT, OP_CONST = 100, 101, 102

# symbol -> (arity, opcode)
OPERATOR_DEFS: dict[str, tuple[int, int]] = {
    "add": (2, OP_ADD),
    "sub": (2, OP_SUB),
    "mul": (2, OP_MUL),
    "div": (2, OP_DIV),
    "pow": (2, OP_POW),
    "sin": (1, OP_SIN),
    "cos": (1, OP_COS),
    "exp": (1, OP_EXP),
    "log": (1, OP_LOG),
    "sqrt": (1, OP_SQRT),
    "square": (1, OP_SQUARE),
}

INFIX_SYMBOLS = {OP_ADD: "+", OP_SUB: "-", OP_MUL: "*", OP_DIV: "/", OP_POW: "**"}

TRIG_OPERATORS = {"sin", "cos"}

# parent symbol -> child symbol disallowed directly beneath it
INVERSE_UNARY_PAIRS = {
    "log": "exp",
    "exp": "log",
    "sqrt": "square",
    "square": "sqrt",
}


@dataclass(frozen=True)
class Token:
    """One entry of a token library; `id` equals its position there."""

    id: int
    symbol: str
    arity: int
    kind: TokenKind
    opcode: int
    value: float = 0.0  # literal value; ignored for other kinds
    var_index: int = -1  # input column; -1 unless kind is VARIABLE

    def __post_init__(self):
        if self.kind in (TokenKind.VARIABLE, TokenKind.LITERAL, TokenKind.CONST_PLACEHOLDER):
            if self.arity != 0:
                raise ValueError(f"{self.symbol}: terminal kinds must have arity 0")
        elif self.arity not in (1, 2):
            raise ValueError(f"{self.symbol}: operator arity must be 1 or 2")

    @property
    def is_terminal(self) -> bool:
        return self.arity == 0


class TokenLibrary:
    """Ordered, immutable token collection with precomputed kernel views."""

    def __init__(self, tokens: list[Token]):
        symbols = [t.symbol for t in tokens]
        if len(set(symbols)) != len(symbols):
            raise ValueError("duplicate token symbols in library")
        for i, tok in enumerate(tokens):
            if tok.id != i:
                raise ValueError(f"token {tok.symbol} id {tok.id} != position {i}")
        if not any(t.arity == 0 for t in tokens):
            raise ValueError("library needs at least one arity-0 token")
        self.tokens = tuple(tokens)
        self._by_symbol = {t.symbol: t for t in tokens}
        n = len(tokens)
        self.size = n
        self.empty_id = n  # observation marker for "no parent / no sibling"
        self.arities = np.array([t.arity for t in tokens], dtype=np.int8)
        self.opcodes = np.array([t.opcode for t in tokens], dtype=np.int16)
        self.var_indices = np.array([t.var_index for t in tokens], dtype=np.int32)
        self.literal_values = np.array([t.value for t in tokens], dtype=np.float64)
        self.is_trig = np.array(
            [t.symbol in TRIG_OPERATORS for t in tokens], dtype=np.uint8
        )
        inv = np.full(n, -1, dtype=np.int16)
        for parent_sym, child_sym in INVERSE_UNARY_PAIRS.items():
            if parent_sym in self._by_symbol and child_sym in self._by_symbol:
                inv[self._by_symbol[parent_sym].id] = self._by_symbol[child_sym].id
        self.inverse_child = inv
        const_ids = [t.id for t in tokens if t.kind is TokenKind.CONST_PLACEHOLDER]
        if len(const_ids) > 1:
            raise ValueError("at most one const-placeholder token per library")
        self.const_id = const_ids[0] if const_ids else -1
        self.variable_ids = tuple(t.id for t in tokens if t.kind is TokenKind.VARIABLE)
        self.variable_count = len(self.variable_ids)
        seen = {tokens[i].var_index for i in self.variable_ids}
        if seen and seen != set(range(self.variable_count)):
            raise ValueError("variable tokens must cover indices 0..d-1")

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, token_id: int) -> Token:
        if not 0 <= token_id < self.size:
            raise UnknownTokenError(f"token id {token_id} out of range [0, {self.size})")
        return self.tokens[token_id]

    def token(self, symbol: str) -> Token:
        try:
            return self._by_symbol[symbol]
        except KeyError:
            raise UnknownTokenError(f"unknown token symbol {symbol!r}") from None

    def id_of(self, symbol: str) -> int:
        return self.token(symbol).id

    def arity_of(self, token_id: int) -> int:
        return int(self.arities[self._check(token_id)])

    def _check(self, token_id: int) -> int:
        if not 0 <= token_id < self.size:
            raise UnknownTokenError(f"token id {token_id} out of range [0, {self.size})")
        return token_id

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(t.symbol for t in self.tokens)

    def __repr__(self):
        return f"TokenLibrary({', '.join(self.symbols)})"


def _format_literal(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def make_library(
    operators: list[str] | tuple[str, ...],
    n_variables: int,
    include_const: bool = False,
    literals: tuple[float, ...] = (),
) -> TokenLibrary:
    """Build a library from operator names, x1..xd variables, and extras.

    Operator names must come from OPERATOR_DEFS. Variables are named
    x1..x<n_variables>.
    """
    tokens: list[Token] = []
    for sym in operators:
        if sym not in OPERATOR_DEFS:
            raise UnknownTokenError(
                f"unknown operator {sym!r}; known: {sorted(OPERATOR_DEFS)}"
            )
        arity, opcode = OPERATOR_DEFS[sym]
        kind = TokenKind.BINARY_OP if arity == 2 else TokenKind.UNARY_OP
        tokens.append(Token(len(tokens), sym, arity, kind, opcode))
    for i in range(n_variables):
        tokens.append(
            Token(len(tokens), f"x{i + 1}", 0, TokenKind.VARIABLE, OP_VAR, var_index=i)
        )
    for value in literals:
        tokens.append(
            Token(len(tokens), _format_literal(value), 0, TokenKind.LITERAL, OP_LIT,
                  value=float(value))
        )
    if include_const:
        tokens.append(Token(len(tokens), "const", 0, TokenKind.CONST_PLACEHOLDER, OP_CONST))
    return TokenLibrary(tokens)
