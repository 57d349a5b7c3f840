"""Multi-head attention built from the autodiff primitives.

One projection set (q, k, v, o with biases) serves self-attention,
encoder-decoder cross-attention, and the memory reads.  Extra key/value
rows (already projected) may be appended for key-value augmentation; the
query stream and output length never change.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class AttnProjections:
    wq: object
    wk: object
    wv: object
    wo: object
    bq: object
    bk: object
    bv: object
    bo: object

    def tensors(self, prefix):
        return {
            f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk,
            f"{prefix}.wv": self.wv, f"{prefix}.wo": self.wo,
            f"{prefix}.bq": self.bq, f"{prefix}.bk": self.bk,
            f"{prefix}.bv": self.bv, f"{prefix}.bo": self.bo,
        }


def multi_head_attention(q_in, kv_in, proj, heads, mask=None,
                         k_extra=None, v_extra=None):
    """Project, split into heads, attend, merge, project out.

    q_in (Lq, d), kv_in (Lkv, d).  k_extra/v_extra are pre-projected rows
    appended to every head's keys and values; mask, when given, must cover
    the appended rows: shape (Lq, Lkv + extra).
    """
    d = q_in.data.shape[1]
    if d % heads:
        raise ValueError(f"hidden dim {d} not divisible by {heads} heads")
    q = T.linear(q_in, proj.wq, proj.bq)
    k = T.linear(kv_in, proj.wk, proj.bk)
    v = T.linear(kv_in, proj.wv, proj.bv)
    if k_extra is not None:
        k = T.concat_rows([k, k_extra])
        v = T.concat_rows([v, v_extra])
    dh = d // heads
    outs = []
    for h in range(heads):
        qh = T.slice_cols(q, h * dh, (h + 1) * dh)
        kh = T.slice_cols(k, h * dh, (h + 1) * dh)
        vh = T.slice_cols(v, h * dh, (h + 1) * dh)
        outs.append(T.attn(qh, kh, vh, mask=mask))
    merged = outs[0] if heads == 1 else T.concat_cols(outs)
    return T.linear(merged, proj.wo, proj.bo)


def causal_mask(n_queries, n_prefix=0, extra=0):
    """Lower-triangular mask over the token block, with n_prefix always-
    visible leading key columns (memory rows) and `extra` trailing ones."""
    mask = np.zeros((n_queries, n_prefix + n_queries + extra), dtype=bool)
    mask[:, :n_prefix] = True
    mask[:, n_prefix:n_prefix + n_queries] = np.tril(
        np.ones((n_queries, n_queries), dtype=bool))
    if extra:
        mask[:, n_prefix + n_queries:] = True
    return mask
