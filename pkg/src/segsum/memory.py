"""External memory mechanisms carried across document segments.

Two kinds per layer: a compressive memory whose older half is a convolution
of cached self-attention inputs, and an attentive memory updated by a gated
tanh candidate synthesized via attention over the segment.

Cross-segment gradient policy: everything entering an update from a past
segment is a detached constant (the state snapshot and the stashed stream
rows, which are stop-gradient values by construction).  The fold of the
previous segment's pending rows into the state is computed inside the
*current* segment's graph, so the compression kernel and gate/update
weights learn through the current read while gradients can never reach an
earlier segment's subgraph.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .attention import multi_head_attention
from .tensor import stop_gradient


@dataclass
class CompressiveState:
    """Snapshot [compressed half | uncompressed half], zeros beyond validity."""

    M: np.ndarray
    valid_compressed: int
    valid_uncompressed: int

    @property
    def size(self):
        return self.M.shape[0]

    def valid_rows(self):
        half = self.size // 2
        return np.concatenate([
            self.M[:self.valid_compressed],
            self.M[half:half + self.valid_uncompressed],
        ], axis=0)


@dataclass
class AttentiveState:
    M: np.ndarray
    step: int


def fresh_compressive_state(m, d):
    if m % 2:
        raise ValueError(f"compressive memory size must be even, got {m}")
    return CompressiveState(np.zeros((m, d)), 0, 0)


def fresh_attentive_state(m, d):
    return AttentiveState(np.zeros((m, d)), 0)


@dataclass
class AttentiveParams:
    """Gate/update weights, each (d, d), applied on the feature axis."""

    w_u1: object
    w_u2: object
    w_g1: object
    w_g2: object

    def tensors(self, prefix):
        return {f"{prefix}.w_u1": self.w_u1, f"{prefix}.w_u2": self.w_u2,
                f"{prefix}.w_g1": self.w_g1, f"{prefix}.w_g2": self.w_g2}


def compressive_update(state, h_inp, kernel, ratio):
    """Fold a segment's self-attention input rows into the memory.

    Appends stop-gradient rows to the uncompressed half, compresses the
    overflow beyond the newest half, and keeps the newest compressed rows.
    Returns (valid memory rows as one in-graph tensor, new state snapshot).
    An empty h_inp leaves the state unchanged.
    """
    graph = h_inp.graph
    m = state.size
    half = m // 2
    d = state.M.shape[1]
    if h_inp.data.shape[0] == 0:
        return graph.constant(state.valid_rows()), state

    prev_c = graph.constant(state.M[:state.valid_compressed].copy())
    prev_u = graph.constant(
        state.M[half:half + state.valid_uncompressed].copy())

    cached = stop_gradient(h_inp)
    merged_u = T.concat_rows([prev_u, cached])
    n_u = merged_u.data.shape[0]
    overflow_len = max(0, n_u - half)
    overflow = T.slice_rows(merged_u, 0, overflow_len)
    compressed = T.conv1d_compress(overflow, kernel, ratio)
    new_u = T.slice_rows(merged_u, overflow_len, n_u)

    merged_c = T.concat_rows([prev_c, compressed])
    n_c = merged_c.data.shape[0]
    new_c = T.slice_rows(merged_c, max(0, n_c - half), n_c)

    rows = T.concat_rows([new_c, new_u])
    snapshot = np.zeros((m, d))
    snapshot[:new_c.data.shape[0]] = new_c.data
    snapshot[half:half + new_u.data.shape[0]] = new_u.data
    new_state = CompressiveState(snapshot, new_c.data.shape[0],
                                 new_u.data.shape[0])
    return rows, new_state


def attentive_synthesize(m_prev, h_self):
    """Summarize the segment for the memory: attention with the old memory
    as queries over stop-gradient copies of the self-attention output."""
    if h_self.data.shape[0] == 0:
        raise ValueError("cannot synthesize memory from an empty segment")
    guarded = stop_gradient(h_self)
    return T.attn(m_prev, guarded, guarded)


def attentive_update(m_prev, synth, params):
    """Gated convex combination of the old memory and a tanh candidate."""
    update = T.tanh(T.add(T.matmul(m_prev, params.w_u1),
                          T.matmul(synth, params.w_u2)))
    gate = T.sigmoid(T.add(T.matmul(m_prev, params.w_g1),
                           T.matmul(synth, params.w_g2)))
    keep = T.affine(gate, -1.0, 1.0)
    return T.add(T.mul(gate, update), T.mul(keep, m_prev))


def attentive_step(state, h_self, params):
    """One full memory transition; returns (in-graph M^t, new snapshot)."""
    m_prev = h_self.graph.constant(state.M.copy())
    synth = attentive_synthesize(m_prev, h_self)
    m_new = attentive_update(m_prev, synth, params)
    return m_new, AttentiveState(m_new.data.copy(), state.step + 1)


def memory_augmented_self_attention(h_inp, mem_rows, proj, heads, mask=None):
    """Self-attention whose keys/values are [valid memory rows; inputs].

    mem_rows is an in-graph tensor of the valid rows (possibly zero rows) or
    None for no memory; either way the output length equals the query length.
    mask, when given, must already cover the memory columns.
    """
    if mem_rows is not None and mem_rows.data.shape[0] > 0:
        kv_in = T.concat_rows([mem_rows, h_inp])
    else:
        kv_in = h_inp
    return multi_head_attention(h_inp, kv_in, proj, heads, mask=mask)


def memory_cross_attention(h, mem_rows, proj, heads):
    """Attentive-memory read: h queries the memory rows.

    Returns None when there is no memory yet (t=1); the caller applies the
    residual-plus-layernorm bypass in that case.
    """
    if mem_rows is None:
        return None
    return multi_head_attention(h, mem_rows, proj, heads)
