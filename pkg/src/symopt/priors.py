"""Composable logit adjustments: hard constraint masks and soft priors.

Each adjuster maps a sampling-step context to a vector over the library,
taking values in {-inf} U R. Hard constraints only ever emit 0 or -inf; soft
priors only emit finite values. Composition is an element-wise sum with -inf
absorbing; composing to an empty support is a loud contract violation, never
a silent renormalization.

These per-prefix implementations are the reference semantics. The batched
sampler recognizes the standard adjusters and computes identical masks
through the compiled state-machine kernel; parity between the two paths is
covered by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ContractViolationError
from .tokens import TokenLibrary
from .traversal import PrefixState

NEG_INF = float("-inf")


@dataclass(frozen=True)
class StepContext:
    """Everything an adjuster may condition on at one sampling step."""

    lib: TokenLibrary
    prefix: tuple[int, ...]
    length: int
    dangling: int
    parent_id: int      # library empty marker at the root
    sibling_id: int     # library empty marker when no completed left sibling
    open_ancestors: tuple[int, ...]  # unfinished operators above the slot

    @classmethod
    def from_prefix(cls, prefix, lib: TokenLibrary) -> "StepContext":
        state = PrefixState.from_prefix(prefix, lib)
        return cls.from_state(state, lib)

    @classmethod
    def from_state(cls, state: PrefixState, lib: TokenLibrary) -> "StepContext":
        return cls(
            lib=lib,
            prefix=tuple(state.ids),
            length=state.length,
            dangling=state.dangling,
            parent_id=state.parent_id(),
            sibling_id=state.sibling_id(),
            open_ancestors=state.open_ancestors(),
        )


class LogitAdjuster:
    """Base adjuster; subclasses implement adjust(ctx) -> (|L|,) vector."""

    name = "adjuster"
    is_constraint = True  # hard constraints emit {0, -inf}; priors stay finite

    def adjust(self, ctx: StepContext) -> np.ndarray:
        raise NotImplementedError


class LengthMask(LogitAdjuster):
    """Keep completed lengths within [min_len, max_len].

    Terminals are masked while completing now would end below min_len. Any
    token whose arity could not terminate within max_len is masked: with
    current length k and d open slots, choosing arity a needs at least
    k + d + a tokens in total, so the mask reserves budget for every
    currently open slot rather than truncating best-effort.
    """

    name = "length"

    def __init__(self, min_len: int = 4, max_len: int = 30):
        if not 1 <= min_len <= max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        self.min_len = min_len
        self.max_len = max_len

    def adjust(self, ctx: StepContext) -> np.ndarray:
        out = np.zeros(ctx.lib.size)
        arities = ctx.lib.arities
        over = ctx.length + ctx.dangling + arities > self.max_len
        out[over] = NEG_INF
        if ctx.dangling == 1 and ctx.length + 1 < self.min_len:
            out[arities == 0] = NEG_INF
        return out


class NoAllConstChildren(LogitAdjuster):
    """An operator's children must not all be constant placeholders."""

    name = "no_const_children"

    def adjust(self, ctx: StepContext) -> np.ndarray:
        out = np.zeros(ctx.lib.size)
        const_id = ctx.lib.const_id
        if const_id < 0 or ctx.parent_id == ctx.lib.empty_id:
            return out
        parent_arity = ctx.lib.arity_of(ctx.parent_id)
        if parent_arity == 1 or ctx.sibling_id == const_id:
            out[const_id] = NEG_INF
        return out


class NoInverseUnary(LogitAdjuster):
    """No unary operator directly below its inverse (log under exp, etc.)."""

    name = "inverse"

    def adjust(self, ctx: StepContext) -> np.ndarray:
        out = np.zeros(ctx.lib.size)
        if ctx.parent_id != ctx.lib.empty_id:
            blocked = ctx.lib.inverse_child[ctx.parent_id]
            if blocked >= 0:
                out[blocked] = NEG_INF
        return out


class NoNestedTrig(LogitAdjuster):
    """No trig operator anywhere below another trig operator.

    Applies to all descendants, not just direct children: any open ancestor
    being trig masks every trig token at this slot.
    """

    name = "trig"

    def adjust(self, ctx: StepContext) -> np.ndarray:
        out = np.zeros(ctx.lib.size)
        if any(ctx.lib.is_trig[a] for a in ctx.open_ancestors):
            out[ctx.lib.is_trig.astype(bool)] = NEG_INF
        return out


class ArityBalancePrior(LogitAdjuster):
    """Soft bias equalizing the total probability of each arity class.

    Each token of arity a gets -log(count of arity-a tokens), shifted so a
    balanced library gets exactly zero. Under otherwise-uniform logits the
    summed probability per arity class then comes out equal. Finite by
    construction: priors bias, they never eliminate.
    """

    name = "arity_prior"
    is_constraint = False

    def __init__(self, lib: TokenLibrary):
        counts = {}
        for a in lib.arities:
            counts[int(a)] = counts.get(int(a), 0) + 1
        shift = float(np.mean([np.log(c) for c in counts.values()]))
        self._vec = np.array(
            [-np.log(counts[int(a)]) + shift for a in lib.arities], dtype=np.float64
        )

    def adjust(self, ctx: StepContext) -> np.ndarray:
        return self._vec.copy()


def compose(adjusters, ctx: StepContext) -> np.ndarray:
    """Element-wise sum of all adjustments; -inf absorbs.

    Raises ContractViolationError when the composed vector has no finite
    entry (jointly unsatisfiable constraints must fail loudly).
    """
    total = np.zeros(ctx.lib.size)
    for adj in adjusters:
        total = total + adj.adjust(ctx)
    if not np.any(np.isfinite(total)):
        raise ContractViolationError(
            f"all {ctx.lib.size} tokens masked after prefix of length {ctx.length}"
        )
    return total


# Functional forms of the standard adjusters, convenient for direct calls.

def length_mask(prefix, lib: TokenLibrary, min_len: int = 4, max_len: int = 30) -> np.ndarray:
    return LengthMask(min_len, max_len).adjust(StepContext.from_prefix(prefix, lib))


def no_all_const_children(prefix, lib: TokenLibrary) -> np.ndarray:
    return NoAllConstChildren().adjust(StepContext.from_prefix(prefix, lib))


def no_inverse_unary(prefix, lib: TokenLibrary) -> np.ndarray:
    return NoInverseUnary().adjust(StepContext.from_prefix(prefix, lib))


def no_nested_trig(prefix, lib: TokenLibrary) -> np.ndarray:
    return NoNestedTrig().adjust(StepContext.from_prefix(prefix, lib))


def arity_balance_prior(lib: TokenLibrary) -> np.ndarray:
    """The (prefix-independent) arity-balancing bias vector."""
    return ArityBalancePrior(lib).adjust(
        StepContext(lib, (), 0, 1, lib.empty_id, lib.empty_id, ())
    )


CONSTRAINT_NAMES = {
    "length": LengthMask,
    "no_const_children": NoAllConstChildren,
    "inverse": NoInverseUnary,
    "trig": NoNestedTrig,
}


def build_adjusters(
    names,
    lib: TokenLibrary,
    min_len: int = 4,
    max_len: int = 30,
    arity_prior: bool = True,
) -> list[LogitAdjuster]:
    """Instantiate the named constraint set plus the optional arity prior."""
    out: list[LogitAdjuster] = []
    for name in names:
        if name not in CONSTRAINT_NAMES:
            raise ValueError(f"unknown constraint {name!r}; known: {sorted(CONSTRAINT_NAMES)}")
        if name == "length":
            out.append(LengthMask(min_len, max_len))
        else:
            out.append(CONSTRAINT_NAMES[name]())
    if arity_prior:
        out.append(ArityBalancePrior(lib))
    return out


def fast_plan(adjusters, lib: TokenLibrary, max_len_cap: int):
    """Split adjusters into kernel flags + a constant prior, if possible.

    Returns (flags, min_len, max_len, prior_vec) when every adjuster is one
    of the standard types, else None (the sampler then walks the generic
    per-prefix path). The max-length budget rule is always enforced by the
    kernel, with the cap defaulting to the sampler's own limit.
    """
    flags = 0
    min_len, max_len = 1, max_len_cap
    prior = np.zeros(lib.size)
    for adj in adjusters:
        if isinstance(adj, LengthMask):
            flags |= kernels.FLAG_LENGTH
            min_len = max(min_len, adj.min_len)
            max_len = min(max_len, adj.max_len)
        elif isinstance(adj, NoAllConstChildren):
            flags |= kernels.FLAG_CONST_CHILDREN
        elif isinstance(adj, NoInverseUnary):
            flags |= kernels.FLAG_INVERSE
        elif isinstance(adj, NoNestedTrig):
            flags |= kernels.FLAG_TRIG
        elif isinstance(adj, ArityBalancePrior):
            prior = prior + adj._vec
        else:
            return None
    return flags, min_len, max_len, prior
