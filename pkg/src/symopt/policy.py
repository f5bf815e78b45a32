"""Autoregressive policy over token sequences.

A single-layer gated recurrent cell consumes, at every step, the one-hot
parent and sibling of the slot being filled (with a dedicated EMPTY class
each) and emits logits over the library. Constraint masks and priors are
added to the logits before the softmax; they are constants with respect to
the parameters, so sequence log-probability gradients backpropagate through
the recurrence only.

Everything is plain numpy with handwritten backward passes, keeping the
gradient exactly checkable against finite differences. The batched engine
fuses the gate matmuls and shrinks to the still-active rows as sequences
complete; neither changes any computed quantity.

Checkpoint layout (little-endian): 8-byte magic b"SYMOPT01", four uint32
fields (format version, hidden size, input size, output size), one uint64
parameter count, then that many float64 parameter values in the flat order
defined by PolicyParams.to_flat.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import (
    ContractViolationError,
    IncompleteTraversalError,
    UnreachableTraversalError,
)
from .priors import StepContext, compose, fast_plan
from .tokens import TokenLibrary
from .traversal import PrefixState, is_complete

CHECKPOINT_MAGIC = b"SYMOPT01"

_PARAM_ORDER = (
    "w_xz", "w_hz", "b_z",
    "w_xr", "w_hr", "b_r",
    "w_xn", "w_hn", "b_n",
    "w_out", "b_out",
)


@dataclass
class PolicyParams:
    """Weights of the recurrent policy; `n_out` equals the library size."""

    hidden_size: int
    n_in: int
    n_out: int
    w_xz: np.ndarray
    w_hz: np.ndarray
    b_z: np.ndarray
    w_xr: np.ndarray
    w_hr: np.ndarray
    b_r: np.ndarray
    w_xn: np.ndarray
    w_hn: np.ndarray
    b_n: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def arrays(self):
        return [getattr(self, name) for name in _PARAM_ORDER]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        if vec.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {vec.size}")
        pos = 0
        for name in _PARAM_ORDER:
            arr = getattr(self, name)
            arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)
            pos += arr.size

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            self.hidden_size, self.n_in, self.n_out,
            *[a.copy() for a in self.arrays()],
        )


def _shapes(hidden_size: int, n_in: int, n_out: int):
    return (
        (n_in, hidden_size), (hidden_size, hidden_size), (hidden_size,),
        (n_in, hidden_size), (hidden_size, hidden_size), (hidden_size,),
        (n_in, hidden_size), (hidden_size, hidden_size), (hidden_size,),
        (hidden_size, n_out), (n_out,),
    )


def init_policy(hidden_size: int, lib: TokenLibrary, seed: int) -> PolicyParams:
    """Small uniform [-0.1, 0.1] init; deterministic for a fixed seed."""
    if hidden_size < 1:
        raise ValueError("hidden_size must be >= 1")
    n_in = 2 * (lib.size + 1)
    n_out = lib.size
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(-0.1, 0.1, s) for s in _shapes(hidden_size, n_in, n_out)]
    return PolicyParams(hidden_size, n_in, n_out, *arrays)


def params_from_flat(vec, hidden_size: int, n_in: int, n_out: int) -> PolicyParams:
    arrays = [np.zeros(s) for s in _shapes(hidden_size, n_in, n_out)]
    p = PolicyParams(hidden_size, n_in, n_out, *arrays)
    p.set_flat(np.asarray(vec, dtype=np.float64))
    return p


def save_params(params: PolicyParams, path) -> None:
    flat = params.to_flat()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIII", 1, params.hidden_size, params.n_in, params.n_out))
        fh.write(struct.pack("<Q", flat.size))
        fh.write(flat.astype("<f8").tobytes())


def load_params(path) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, hidden, n_in, n_out = struct.unpack("<IIII", fh.read(16))
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<Q", fh.read(8))
        flat = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
    if flat.size != count:
        raise ValueError("truncated checkpoint")
    return params_from_flat(flat, hidden, n_in, n_out)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class _FusedViews:
    """Concatenated weight views so one matmul serves several gates."""

    def __init__(self, p: PolicyParams):
        h = p.hidden_size
        self.h = h
        self.width = p.n_in // 2
        self.w_x = np.hstack([p.w_xz, p.w_xr, p.w_xn])      # (I, 3H)
        self.w_h_zr = np.hstack([p.w_hz, p.w_hr])           # (H, 2H)
        self.w_hn = p.w_hn
        self.b_zr = np.concatenate([p.b_z, p.b_r])
        self.b_n = p.b_n
        self.w_out = p.w_out
        self.b_out = p.b_out

    def step(self, parent_ids, sibling_ids, h_prev):
        """One fused recurrent step; returns (z, r, n, rh, h_new)."""
        hh = self.h
        xw = self.w_x[parent_ids] + self.w_x[self.width + sibling_ids]
        zr = _sigmoid(xw[:, : 2 * hh] + h_prev @ self.w_h_zr + self.b_zr)
        z, r = zr[:, :hh], zr[:, hh:]
        rh = r * h_prev
        n = np.tanh(xw[:, 2 * hh:] + rh @ self.w_hn + self.b_n)
        h_new = (1.0 - z) * n + z * h_prev
        return z, r, n, rh, h_new


def _gru_forward(p: PolicyParams, x, h):
    """Reference unfused step for the single-observation API."""
    z = _sigmoid(x @ p.w_xz + h @ p.w_hz + p.b_z)
    r = _sigmoid(x @ p.w_xr + h @ p.w_hr + p.b_r)
    n = np.tanh(x @ p.w_xn + (r * h) @ p.w_hn + p.b_n)
    h_new = (1.0 - z) * n + z * h
    return z, r, n, h_new


def step_logits(params: PolicyParams, hidden, obs) -> tuple[np.ndarray, np.ndarray]:
    """One decoding step for a single observation (parent_id, sibling_id).

    `hidden` may be None for the first step. Ids use the library's empty
    marker (= library size) for missing parent or sibling.
    """
    parent_id, sibling_id = obs
    width = params.n_in // 2
    if not (0 <= parent_id < width and 0 <= sibling_id < width):
        raise ValueError("observation ids out of range")
    if hidden is None:
        hidden = np.zeros(params.hidden_size)
    x = np.zeros(params.n_in)
    x[parent_id] = 1.0
    x[width + sibling_id] = 1.0
    _, _, _, h_new = _gru_forward(params, x[None, :], hidden[None, :])
    logits = h_new @ params.w_out + params.b_out
    return logits[0], h_new[0]


def _log_softmax(adj):
    """Row-wise log-softmax tolerating -inf entries (each row has a finite one)."""
    m = adj.max(axis=1, keepdims=True)
    shifted = adj - m
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    return shifted - np.log(s), e / s


def _step_entropy(probs, log_sm):
    """Per-row entropy of a masked softmax; 0 * log(0) counts as 0."""
    safe = np.where(probs > 0.0, log_sm, 0.0)
    return -(probs * safe).sum(axis=1)


class _KernelMaskProvider:
    """Constraint masks through the batched state-machine kernel."""

    def __init__(self, lib: TokenLibrary, batch: int, flags: int,
                 min_len: int, max_len: int, prior: np.ndarray):
        self.lib = lib
        self.prior = prior
        self.state = kernels.BatchState(
            batch, max_len, lib.arities, lib.is_trig, lib.inverse_child,
            lib.const_id, flags, min_len, max_len,
        )
        self._mask = np.zeros((batch, lib.size))
        self._parent = np.zeros(batch, dtype=np.int32)
        self._sibling = np.zeros(batch, dtype=np.int32)

    @property
    def done(self):
        return self.state.done

    def step(self):
        self.state.step_masks(self._mask, self._parent, self._sibling)
        adj = self._mask + self.prior
        return adj, self._parent, self._sibling

    def advance(self, chosen) -> None:
        self.state.advance(np.ascontiguousarray(chosen, dtype=np.int32))


class _GenericMaskProvider:
    """Constraint masks through per-row adjuster composition.

    Used whenever the adjuster list contains a type the kernel does not
    recognize. The sampler's max-length budget rule is still always applied
    so that sampling terminates.
    """

    def __init__(self, lib: TokenLibrary, batch: int, adjusters, max_len: int):
        self.lib = lib
        self.batch = batch
        self.adjusters = list(adjusters)
        self.max_len = max_len
        self.states = [PrefixState(lib) for _ in range(batch)]
        self.done = np.zeros(batch, dtype=np.uint8)

    def step(self):
        lib = self.lib
        adj = np.zeros((self.batch, lib.size))
        parent = np.full(self.batch, lib.empty_id, dtype=np.int32)
        sibling = np.full(self.batch, lib.empty_id, dtype=np.int32)
        for b, st in enumerate(self.states):
            if self.done[b]:
                continue
            ctx = StepContext.from_state(st, lib)
            parent[b] = ctx.parent_id
            sibling[b] = ctx.sibling_id
            row = compose(self.adjusters, ctx)
            over = ctx.length + ctx.dangling + lib.arities > self.max_len
            row = np.where(over, -np.inf, row)
            if not np.any(np.isfinite(row)):
                raise ContractViolationError(
                    f"all tokens masked at length {ctx.length} under budget {self.max_len}"
                )
            adj[b] = row
        return adj, parent, sibling

    def advance(self, chosen) -> None:
        for b, st in enumerate(self.states):
            if self.done[b]:
                continue
            st.push(int(chosen[b]))
            if st.complete:
                self.done[b] = 1


def _make_provider(lib: TokenLibrary, batch: int, adjusters, max_len: int):
    plan = fast_plan(adjusters, lib, max_len)
    if plan is not None:
        flags, min_len, cap, prior = plan
        return _KernelMaskProvider(lib, batch, flags, min_len, cap, prior)
    return _GenericMaskProvider(lib, batch, adjusters, max_len)


def _default_max_len(adjusters, fallback: int = 64) -> int:
    from .priors import LengthMask

    for adj in adjusters:
        if isinstance(adj, LengthMask):
            return adj.max_len
    return fallback


@dataclass
class SampleBatch:
    """A batch of sampled traversals with their sampling statistics."""

    traversals: list[tuple[int, ...]]
    log_probs: np.ndarray
    entropies: np.ndarray
    rewards: np.ndarray | None = None

    def __len__(self):
        return len(self.traversals)


def sample_batch(
    params: PolicyParams,
    lib: TokenLibrary,
    adjusters,
    rng: np.random.Generator,
    batch_size: int,
    max_len: int | None = None,
) -> SampleBatch:
    """Sample complete, constraint-satisfying traversals.

    log_probs and entropies are sums over steps of the adjusted (post-mask)
    categorical distributions.
    """
    if max_len is None:
        max_len = _default_max_len(adjusters)
    provider = _make_provider(lib, batch_size, adjusters, max_len)
    views = _FusedViews(params)
    h = np.zeros((batch_size, params.hidden_size))
    ids_buf = np.zeros((batch_size, max_len), dtype=np.int32)
    lengths = np.zeros(batch_size, dtype=np.int32)
    log_probs = np.zeros(batch_size)
    entropies = np.zeros(batch_size)
    chosen_full = np.zeros(batch_size, dtype=np.int32)
    for t in range(max_len):
        done = provider.done
        idx = np.flatnonzero(done == 0)
        if idx.size == 0:
            break
        adj_mask, parent, sibling = provider.step()
        compact = idx.size < batch_size
        if compact:
            h_act = h[idx]
            par, sib, mask = parent[idx], sibling[idx], adj_mask[idx]
        else:
            h_act, par, sib, mask = h, parent, sibling, adj_mask
        _, _, _, _, h_new = views.step(par, sib, h_act)
        adj = h_new @ views.w_out + views.b_out
        adj += mask
        if not np.isfinite(adj.max(axis=1)).all():
            raise ContractViolationError("constraint composition masked every token")
        log_sm, probs = _log_softmax(adj)
        u = rng.random(idx.size)
        cdf = probs.cumsum(axis=1)
        chosen = (cdf > (u * cdf[:, -1])[:, None]).argmax(axis=1)
        arows = np.arange(idx.size)
        log_probs[idx] += log_sm[arows, chosen]
        entropies[idx] += _step_entropy(probs, log_sm)
        ids_buf[idx, t] = chosen
        lengths[idx] += 1
        if compact:
            h[idx] = h_new
            chosen_full[idx] = chosen
            provider.advance(chosen_full)
        else:
            h = h_new
            provider.advance(chosen.astype(np.int32))
    if not np.all(provider.done):
        raise ContractViolationError("sampling exceeded max_len without completing")
    rows_list = ids_buf.tolist()
    traversals = [tuple(rows_list[b][: lengths[b]]) for b in range(batch_size)]
    return SampleBatch(traversals, log_probs, entropies)


def sample_sequence(params, adjusters, rng, max_len, lib: TokenLibrary):
    """Sample one traversal; returns (ids, log_prob, entropy)."""
    batch = sample_batch(params, lib, adjusters, rng, 1, max_len)
    return batch.traversals[0], float(batch.log_probs[0]), float(batch.entropies[0])


class _Grads:
    """Gradient accumulator in the fused layout, split back at the end."""

    def __init__(self, params: PolicyParams):
        h = params.hidden_size
        self.h = h
        self.w_x = np.zeros((params.n_in, 3 * h))
        self.w_h_zr = np.zeros((h, 2 * h))
        self.w_hn = np.zeros((h, h))
        self.b_zr = np.zeros(2 * h)
        self.b_n = np.zeros(h)
        self.w_out = np.zeros_like(params.w_out)
        self.b_out = np.zeros_like(params.b_out)

    def to_flat(self):
        h = self.h
        return np.concatenate([
            self.w_x[:, :h].ravel(), self.w_h_zr[:, :h].ravel(), self.b_zr[:h],
            self.w_x[:, h:2 * h].ravel(), self.w_h_zr[:, h:].ravel(), self.b_zr[h:],
            self.w_x[:, 2 * h:].ravel(), self.w_hn.ravel(), self.b_n,
            self.w_out.ravel(), self.b_out,
        ])


def batch_gradient(
    params: PolicyParams,
    lib: TokenLibrary,
    traversals,
    adjusters,
    seq_weights,
    entropy_weights=None,
    max_len: int | None = None,
    on_unreachable: str = "raise",
):
    """Gradient of sum_i [w_i log p(tau_i) + e_i H(tau_i)] w.r.t. flat params.

    H(tau) is the sum over the traversal's steps of the adjusted categorical
    entropy. Traversals hitting a -inf adjustment on their own path have
    probability zero; depending on `on_unreachable` this raises or drops the
    sequence (its weights are zeroed, log_prob set to -inf, index reported).

    Returns (flat_gradient, log_probs, entropies, dropped_indices).
    """
    n_seq = len(traversals)
    if n_seq == 0:
        return np.zeros(params.n_params), np.zeros(0), np.zeros(0), []
    seq_weights = np.asarray(seq_weights, dtype=np.float64)
    entropy_weights = (
        np.zeros(n_seq) if entropy_weights is None
        else np.asarray(entropy_weights, dtype=np.float64)
    )
    lengths = np.array([len(t) for t in traversals], dtype=np.int32)
    for t in traversals:
        if not is_complete(t, lib):
            raise IncompleteTraversalError("gradients need complete traversals")
    horizon = int(lengths.max())
    if max_len is None:
        max_len = max(_default_max_len(adjusters), horizon)
    ids_mat = np.zeros((n_seq, horizon), dtype=np.int32)
    for i, t in enumerate(traversals):
        ids_mat[i, : len(t)] = t

    provider = _make_provider(lib, n_seq, adjusters, max_len)
    views = _FusedViews(params)
    h = np.zeros((n_seq, params.hidden_size))
    log_probs = np.zeros(n_seq)
    entropies = np.zeros(n_seq)
    unreachable = np.zeros(n_seq, dtype=bool)
    cache = []
    for t in range(horizon):
        idx = np.flatnonzero(lengths > t)
        adj_mask, parent, sibling = provider.step()
        h_prev = h[idx]
        z, r, n, rh, h_new = views.step(parent[idx], sibling[idx], h_prev)
        adj = h_new @ views.w_out + views.b_out
        adj += adj_mask[idx]
        log_sm, probs = _log_softmax(adj)
        chosen = ids_mat[idx, t]
        arows = np.arange(idx.size)
        step_lp = log_sm[arows, chosen]
        bad = ~np.isfinite(step_lp)
        if bad.any():
            unreachable[idx[bad]] = True
        log_probs[idx] += step_lp
        entropies[idx] += _step_entropy(probs, log_sm)
        h[idx] = h_new  # h_prev was a fancy-index copy, so in-place is safe
        cache.append((idx, parent[idx], sibling[idx], h_prev, z, r, n, rh, h_new,
                      probs, log_sm, chosen))
        chosen_full = ids_mat[:, t].copy()
        chosen_full[lengths <= t] = 0
        provider.advance(chosen_full)

    if unreachable.any():
        if on_unreachable == "raise":
            raise UnreachableTraversalError(
                f"{int(unreachable.sum())} traversal(s) masked on their own path"
            )
        seq_weights = np.where(unreachable, 0.0, seq_weights)
        entropy_weights = np.where(unreachable, 0.0, entropy_weights)
        log_probs = np.where(unreachable, -np.inf, log_probs)

    grads = _Grads(params)
    hh = params.hidden_size
    width = params.n_in // 2
    dh_full = np.zeros((n_seq, hh))
    for t in range(horizon - 1, -1, -1):
        idx, par, sib, h_prev, z, r, n, rh, h_new, probs, log_sm, chosen = cache[t]
        w = seq_weights[idx][:, None]
        ew = entropy_weights[idx][:, None]
        arows = np.arange(idx.size)
        one_hot = np.zeros_like(probs)
        one_hot[arows, chosen] = 1.0
        dlogits = w * (one_hot - probs)
        if np.any(ew):
            # dH/dlogit_j = -p_j (log p_j + H); zero wherever p_j = 0
            step_h = _step_entropy(probs, log_sm)[:, None]
            safe_log = np.where(probs > 0.0, log_sm, 0.0)
            dlogits += ew * (-probs * (safe_log + step_h))
        grads.w_out += h_new.T @ dlogits
        grads.b_out += dlogits.sum(axis=0)
        dh = dlogits @ views.w_out.T
        dh += dh_full[idx]
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        dpre_n = dn * (1.0 - n * n)
        drh = dpre_n @ views.w_hn.T
        dr = drh * h_prev
        dh_prev += drh * r
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)
        dpre_zr = np.hstack([dpre_z, dpre_r])
        dh_prev += dpre_zr @ views.w_h_zr.T
        grads.w_h_zr += h_prev.T @ dpre_zr
        grads.w_hn += rh.T @ dpre_n
        grads.b_zr += dpre_zr.sum(axis=0)
        grads.b_n += dpre_n.sum(axis=0)
        x = np.zeros((idx.size, params.n_in))
        x[arows, par] = 1.0
        x[arows, width + sib] = 1.0
        grads.w_x += x.T @ np.hstack([dpre_zr, dpre_n])
        dh_full[idx] = dh_prev

    dropped = [int(i) for i in np.flatnonzero(unreachable)]
    return grads.to_flat(), log_probs, entropies, dropped


def log_prob_and_grad(params, traversal, adjusters, lib: TokenLibrary):
    """Exact log-probability and flat-parameter gradient of one traversal."""
    grad, log_probs, _, _ = batch_gradient(
        params, lib, [tuple(traversal)], adjusters, [1.0]
    )
    return float(log_probs[0]), grad
