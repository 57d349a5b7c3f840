"""Reference numpy implementations of the hot row-wise kernels.

These define the semantics; the compiled backend in ``_core.pyx`` mirrors
them loop for loop.  Everything is float64, C-contiguous, rank 2 unless
noted.  Rows of the softmax input may contain -inf (masked slots) but every
row must keep at least one finite entry; callers enforce that.
"""

import numpy as np


def softmax_rows_fwd(scores):
    """Row-wise softmax with per-row max subtraction."""
    m = np.max(scores, axis=1, keepdims=True)
    e = np.exp(scores - m)
    return e / np.sum(e, axis=1, keepdims=True)


def softmax_rows_bwd(probs, grad_out):
    """Gradient of softmax_rows_fwd given its output and upstream grad."""
    inner = np.sum(probs * grad_out, axis=1, keepdims=True)
    return probs * (grad_out - inner)


def layernorm_fwd(x, eps):
    """Row normalization before the affine part.

    Returns (xhat, rstd): xhat has zero mean and unit variance per row,
    rstd is 1/sqrt(var + eps) per row (shape (n, 1)).
    """
    mu = np.mean(x, axis=1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    return (x - mu) * rstd, rstd


def layernorm_bwd(xhat, rstd, grad_xhat):
    """Gradient w.r.t. the un-normalized input given grad w.r.t. xhat."""
    mean_g = np.mean(grad_xhat, axis=1, keepdims=True)
    mean_gx = np.mean(grad_xhat * xhat, axis=1, keepdims=True)
    return rstd * (grad_xhat - mean_g - xhat * mean_gx)


def conv_compress_fwd(xp, kernel):
    """Stride-r kernel-size-r 1-D convolution over the row axis.

    xp: (n*r, d) input already head-padded to a multiple of r.
    kernel: (r, d, d) mapping input channels to output channels.
    Returns (n, d).  Windows of r rows flatten against the flattened
    kernel, so the whole convolution is one BLAS matmul; this kernel has
    no compiled counterpart because BLAS already owns it.
    """
    r, d, _ = kernel.shape
    n = xp.shape[0] // r
    return xp.reshape(n, r * d) @ kernel.reshape(r * d, d)


def conv_compress_bwd(xp, kernel, grad_out):
    """Gradients of conv_compress_fwd w.r.t. (xp, kernel)."""
    r, d, _ = kernel.shape
    n = xp.shape[0] // r
    flat_k = kernel.reshape(r * d, d)
    grad_xp = (grad_out @ flat_k.T).reshape(n * r, d)
    grad_kernel = (xp.reshape(n, r * d).T @ grad_out).reshape(r, d, d)
    return grad_xp, grad_kernel


def cross_entropy_fwd(logits, targets):
    """Per-row negative log-likelihood under a row softmax.

    targets: int64 row labels; rows with target < 0 are ignored (nll 0).
    Returns (nll per row, probs) with probs cached for the backward pass.
    """
    m = np.max(logits, axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = np.sum(e, axis=1, keepdims=True)
    probs = e / z
    lse = np.log(z[:, 0]) + m[:, 0]
    keep = targets >= 0
    idx = np.where(keep, targets, 0)
    nll = np.where(keep, lse - logits[np.arange(logits.shape[0]), idx], 0.0)
    return nll, probs


def cross_entropy_bwd(probs, targets, grad_nll):
    """Gradient w.r.t. logits given per-row upstream grads on the nll."""
    grad = probs * grad_nll[:, None]
    rows = np.arange(probs.shape[0])
    keep = targets >= 0
    idx = np.where(keep, targets, 0)
    grad[rows[keep], idx[keep]] -= grad_nll[keep]
    grad[~keep] = 0.0
    return grad
