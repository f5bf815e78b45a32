"""Pure-Python kernels: expression evaluation and batched sampling state.

This module is the fallback backend; `symopt._kernels` (Cython) implements
the same entry points with identical semantics. Both operate on plain numpy
arrays so callers never branch on the backend.

Mask flag bits (OR-ed into `flags` for BatchState):
    1  length: enforce the minimum-length rule (terminals masked while a
       completion now would end below min_len)
    2  const-children: an operator's children must not all be constants
    4  inverse: no unary operator directly below its inverse
    8  trig: no trigonometric operator anywhere below another one
The maximum-length budget rule is always enforced: token arity `a` is masked
whenever length + dangling + a > max_len, which guarantees every continuation
can still terminate within budget.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

FLAG_LENGTH = 1
FLAG_CONST_CHILDREN = 2
FLAG_INVERSE = 4
FLAG_TRIG = 8

NEG_INF = float("-inf")

# opcode values (kept in sync with symopt.tokens)
_OP_ADD, _OP_SUB, _OP_MUL, _OP_DIV, _OP_POW = 0, 1, 2, 3, 4
_OP_SIN, _OP_COS, _OP_EXP, _OP_LOG, _OP_SQRT, _OP_SQUARE = 10, 11, 12, 13, 14, 15
_OP_VAR, _OP_LIT, _OP_CONST = 100, 101, 102


def eval_prefix(opcodes, iargs, fargs, X, out):
    """Evaluate a pre-order expression over the rows of X.

    opcodes/iargs/fargs describe the traversal node by node: opcode, integer
    argument (variable column; unused otherwise), float argument (literal
    value or resolved constant). Writes the value vector into `out`; returns
    0, or 1 if any output entry is non-finite.
    """
    n = len(opcodes)
    npts = X.shape[0]
    stack = np.empty((n + 1, npts), dtype=np.float64)
    sp = 0
    with np.errstate(all="ignore"):
        for i in range(n - 1, -1, -1):
            op = opcodes[i]
            if op == _OP_VAR:
                stack[sp] = X[:, iargs[i]]
                sp += 1
            elif op == _OP_LIT or op == _OP_CONST:
                stack[sp] = fargs[i]
                sp += 1
            elif op < 10:  # binary: first pop is the left operand
                left = stack[sp - 1]
                right = stack[sp - 2]
                if op == _OP_ADD:
                    res = left + right
                elif op == _OP_SUB:
                    res = left - right
                elif op == _OP_MUL:
                    res = left * right
                elif op == _OP_DIV:
                    res = left / right
                else:
                    res = np.power(left, right)
                stack[sp - 2] = res
                sp -= 1
            else:  # unary
                arg = stack[sp - 1]
                if op == _OP_SIN:
                    stack[sp - 1] = np.sin(arg)
                elif op == _OP_COS:
                    stack[sp - 1] = np.cos(arg)
                elif op == _OP_EXP:
                    stack[sp - 1] = np.exp(arg)
                elif op == _OP_LOG:
                    stack[sp - 1] = np.log(arg)
                elif op == _OP_SQRT:
                    stack[sp - 1] = np.sqrt(arg)
                else:
                    stack[sp - 1] = arg * arg
    out[:] = stack[0]
    return 0 if bool(np.isfinite(out).all()) else 1


class BatchState:
    """Per-row stack machine over a batch of growing traversals.

    Same contract as the compiled version: step_masks fills constraint masks
    (0 / -inf) plus parent/sibling observations for the next slot (done rows
    get an all-zero mask and the empty marker, which is len(arities));
    advance pushes one chosen token per active row and marks completed rows
    done.
    """

    def __init__(self, batch, horizon, arities, is_trig, inverse_child,
                 const_id, flags, min_len, max_len):
        depth = horizon + 2
        self.stack_tok = np.full((batch, depth), -1, dtype=np.int16)
        self.stack_filled = np.zeros((batch, depth), dtype=np.int8)
        self.stack_last = np.full((batch, depth), -1, dtype=np.int16)
        self.sp = np.zeros(batch, dtype=np.int32)
        self.length = np.zeros(batch, dtype=np.int32)
        self.dangling = np.ones(batch, dtype=np.int32)
        self.trig_open = np.zeros(batch, dtype=np.int32)
        self.done = np.zeros(batch, dtype=np.uint8)
        self.arities = np.ascontiguousarray(arities, dtype=np.int8)
        self.is_trig = np.ascontiguousarray(is_trig, dtype=np.uint8)
        self.inverse_child = np.ascontiguousarray(inverse_child, dtype=np.int16)
        self.const_id = int(const_id)
        self.flags = int(flags)
        self.min_len = int(min_len)
        self.max_len = int(max_len)
        self.batch = int(batch)
        self.size = len(self.arities)

    def step_masks(self, mask_out, parent_out, sibling_out):
        empty = self.size
        flags = self.flags
        for b in range(self.batch):
            mask_out[b, :] = 0.0
            if self.done[b]:
                parent_out[b] = empty
                sibling_out[b] = empty
                continue
            top = self.sp[b] - 1
            if top >= 0:
                parent = int(self.stack_tok[b, top])
                parent_out[b] = parent
                sibling = int(self.stack_last[b, top]) if self.stack_filled[b, top] >= 1 else empty
                sibling_out[b] = sibling
            else:
                parent = -1
                sibling = empty
                parent_out[b] = empty
                sibling_out[b] = empty
            k = int(self.length[b])
            d = int(self.dangling[b])
            for t in range(self.size):
                a = int(self.arities[t])
                if k + d + a > self.max_len:
                    mask_out[b, t] = NEG_INF
                    continue
                if (flags & FLAG_LENGTH) and a == 0 and d == 1 and k + 1 < self.min_len:
                    mask_out[b, t] = NEG_INF
                    continue
                if (flags & FLAG_TRIG) and self.is_trig[t] and self.trig_open[b] > 0:
                    mask_out[b, t] = NEG_INF
                    continue
                if (flags & FLAG_INVERSE) and parent >= 0 and self.inverse_child[parent] == t:
                    mask_out[b, t] = NEG_INF
                    continue
                if (flags & FLAG_CONST_CHILDREN) and t == self.const_id and parent >= 0:
                    if self.arities[parent] == 1:
                        mask_out[b, t] = NEG_INF
                        continue
                    if self.stack_filled[b, top] == 1 and sibling == self.const_id:
                        mask_out[b, t] = NEG_INF
                        continue
        return 0

    def advance(self, chosen):
        for b in range(self.batch):
            if self.done[b]:
                continue
            tok = int(chosen[b])
            a = int(self.arities[tok])
            self.length[b] += 1
            self.dangling[b] += a - 1
            if a > 0:
                self.stack_tok[b, self.sp[b]] = tok
                self.stack_filled[b, self.sp[b]] = 0
                self.stack_last[b, self.sp[b]] = -1
                self.sp[b] += 1
                if self.is_trig[tok]:
                    self.trig_open[b] += 1
                continue
            root = tok
            while self.sp[b] > 0:
                top = self.sp[b] - 1
                self.stack_filled[b, top] += 1
                self.stack_last[b, top] = root
                if self.stack_filled[b, top] == self.arities[self.stack_tok[b, top]]:
                    root = int(self.stack_tok[b, top])
                    if self.is_trig[root]:
                        self.trig_open[b] -= 1
                    self.sp[b] -= 1
                else:
                    break
            if self.sp[b] == 0 and self.dangling[b] == 0:
                self.done[b] = 1
        return 0
