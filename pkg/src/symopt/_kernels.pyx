# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: expression evaluation and batched sampling state.

Mirrors symopt._kernels_py exactly; see that module for the semantics,
including the mask flag bits. The Python fallback is the reference; parity
is enforced by the test suite.
"""

from libc.math cimport sin, cos, exp, log, sqrt, pow, isfinite

import numpy as np

BACKEND = "cython"

FLAG_LENGTH = 1
FLAG_CONST_CHILDREN = 2
FLAG_INVERSE = 4
FLAG_TRIG = 8

cdef enum:
    OP_ADD = 0
    OP_SUB = 1
    OP_MUL = 2
    OP_DIV = 3
    OP_POW = 4
    OP_SIN = 10
    OP_COS = 11
    OP_EXP = 12
    OP_LOG = 13
    OP_SQRT = 14
    OP_SQUARE = 15
    OP_VAR = 100
    OP_LIT = 101
    OP_CONST = 102


def eval_prefix(short[:] opcodes, int[:] iargs, double[:] fargs,
                double[:, ::1] X, double[:] out):
    """Evaluate a pre-order expression over the rows of X. Returns 0, or 1
    if any output entry is non-finite."""
    cdef int n = opcodes.shape[0]
    cdef int npts = X.shape[0]
    cdef int i, p, p_col, sp = 0
    cdef short op
    cdef double v
    stack_arr = np.empty((n + 1, npts), dtype=np.float64)
    cdef double[:, ::1] stack = stack_arr
    for i in range(n - 1, -1, -1):
        op = opcodes[i]
        if op == OP_VAR:
            p_col = iargs[i]
            for p in range(npts):
                stack[sp, p] = X[p, p_col]
            sp += 1
        elif op == OP_LIT or op == OP_CONST:
            v = fargs[i]
            for p in range(npts):
                stack[sp, p] = v
            sp += 1
        elif op < 10:
            if op == OP_ADD:
                for p in range(npts):
                    stack[sp - 2, p] = stack[sp - 1, p] + stack[sp - 2, p]
            elif op == OP_SUB:
                for p in range(npts):
                    stack[sp - 2, p] = stack[sp - 1, p] - stack[sp - 2, p]
            elif op == OP_MUL:
                for p in range(npts):
                    stack[sp - 2, p] = stack[sp - 1, p] * stack[sp - 2, p]
            elif op == OP_DIV:
                for p in range(npts):
                    stack[sp - 2, p] = stack[sp - 1, p] / stack[sp - 2, p]
            else:
                for p in range(npts):
                    stack[sp - 2, p] = pow(stack[sp - 1, p], stack[sp - 2, p])
            sp -= 1
        else:
            if op == OP_SIN:
                for p in range(npts):
                    stack[sp - 1, p] = sin(stack[sp - 1, p])
            elif op == OP_COS:
                for p in range(npts):
                    stack[sp - 1, p] = cos(stack[sp - 1, p])
            elif op == OP_EXP:
                for p in range(npts):
                    stack[sp - 1, p] = exp(stack[sp - 1, p])
            elif op == OP_LOG:
                for p in range(npts):
                    stack[sp - 1, p] = log(stack[sp - 1, p])
            elif op == OP_SQRT:
                for p in range(npts):
                    stack[sp - 1, p] = sqrt(stack[sp - 1, p])
            else:
                for p in range(npts):
                    stack[sp - 1, p] = stack[sp - 1, p] * stack[sp - 1, p]
    cdef int bad = 0
    for p in range(npts):
        out[p] = stack[0, p]
        if not isfinite(out[p]):
            bad = 1
    return bad


cdef class BatchState:
    """Per-row stack machine over a batch of growing traversals.

    Tracks open operator nodes, the open-slot count, and trig nesting for
    every row; produces constraint masks plus parent/sibling observations for
    the next slot, and consumes one chosen token per active row.
    """

    cdef short[:, ::1] stack_tok
    cdef signed char[:, ::1] stack_filled
    cdef short[:, ::1] stack_last
    cdef int[::1] sp
    cdef int[::1] length
    cdef int[::1] dangling
    cdef int[::1] trig_open
    cdef unsigned char[::1] done_view
    cdef readonly object done   # numpy array shared with done_view
    cdef signed char[::1] arities
    cdef unsigned char[::1] is_trig
    cdef short[::1] inverse_child
    cdef int const_id, flags, min_len, max_len, batch, size

    def __init__(self, int batch, int horizon, arities, is_trig, inverse_child,
                 int const_id, int flags, int min_len, int max_len):
        depth = horizon + 2
        self.stack_tok = np.full((batch, depth), -1, dtype=np.int16)
        self.stack_filled = np.zeros((batch, depth), dtype=np.int8)
        self.stack_last = np.full((batch, depth), -1, dtype=np.int16)
        self.sp = np.zeros(batch, dtype=np.int32)
        self.length = np.zeros(batch, dtype=np.int32)
        self.dangling = np.ones(batch, dtype=np.int32)
        self.trig_open = np.zeros(batch, dtype=np.int32)
        self.done = np.zeros(batch, dtype=np.uint8)
        self.done_view = self.done
        self.arities = np.ascontiguousarray(arities, dtype=np.int8)
        self.is_trig = np.ascontiguousarray(is_trig, dtype=np.uint8)
        self.inverse_child = np.ascontiguousarray(inverse_child, dtype=np.int16)
        self.const_id = const_id
        self.flags = flags
        self.min_len = min_len
        self.max_len = max_len
        self.batch = batch
        self.size = self.arities.shape[0]

    def step_masks(self, double[:, ::1] mask_out, int[::1] parent_out,
                   int[::1] sibling_out):
        """Fill masks (0 / -inf) and observations; done rows get zeros/empty."""
        cdef int b, t, top, parent, sibling, k, d, a
        cdef int empty = self.size
        cdef double NEG_INF = -float("inf")
        for b in range(self.batch):
            for t in range(self.size):
                mask_out[b, t] = 0.0
            if self.done_view[b]:
                parent_out[b] = empty
                sibling_out[b] = empty
                continue
            top = self.sp[b] - 1
            if top >= 0:
                parent = self.stack_tok[b, top]
                parent_out[b] = parent
                if self.stack_filled[b, top] >= 1:
                    sibling = self.stack_last[b, top]
                else:
                    sibling = empty
                sibling_out[b] = sibling
            else:
                parent = -1
                sibling = empty
                parent_out[b] = empty
                sibling_out[b] = empty
            k = self.length[b]
            d = self.dangling[b]
            for t in range(self.size):
                a = self.arities[t]
                if k + d + a > self.max_len:
                    mask_out[b, t] = NEG_INF
                    continue
                if (self.flags & FLAG_LENGTH) and a == 0 and d == 1 and k + 1 < self.min_len:
                    mask_out[b, t] = NEG_INF
                    continue
                if (self.flags & FLAG_TRIG) and self.is_trig[t] and self.trig_open[b] > 0:
                    mask_out[b, t] = NEG_INF
                    continue
                if (self.flags & FLAG_INVERSE) and parent >= 0 and self.inverse_child[parent] == t:
                    mask_out[b, t] = NEG_INF
                    continue
                if (self.flags & FLAG_CONST_CHILDREN) and t == self.const_id and parent >= 0:
                    if self.arities[parent] == 1:
                        mask_out[b, t] = NEG_INF
                        continue
                    if self.stack_filled[b, top] == 1 and sibling == self.const_id:
                        mask_out[b, t] = NEG_INF
                        continue
        return 0

    def advance(self, int[::1] chosen):
        """Push one chosen token per active row; mark completed rows done."""
        cdef int b, tok, a, top, root
        for b in range(self.batch):
            if self.done_view[b]:
                continue
            tok = chosen[b]
            a = self.arities[tok]
            self.length[b] += 1
            self.dangling[b] += a - 1
            if a > 0:
                self.stack_tok[b, self.sp[b]] = <short> tok
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
                self.stack_last[b, top] = <short> root
                if self.stack_filled[b, top] == self.arities[self.stack_tok[b, top]]:
                    root = self.stack_tok[b, top]
                    if self.is_trig[root]:
                        self.trig_open[b] -= 1
                    self.sp[b] -= 1
                else:
                    break
            if self.sp[b] == 0 and self.dangling[b] == 0:
                self.done_view[b] = 1
        return 0
