"""Minimal reverse-mode autodiff over float64 numpy arrays.

A Graph records one append-only tape of op applications.  Tensors are
either leaves (parameters, constants) or op outputs holding a reference to
the tape node that produced them.  ``backward`` walks the tape in reverse,
``Graph.clear`` frees all recorded nodes; leaves survive clears, op outputs
become stale and may only be reused through their raw ``.data``.

Live-node accounting (``live_node_count`` / ``peak_live_nodes``) counts
tape nodes and is the package's stand-in for activation memory.
"""

import math

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


def _as_f64(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 3:
        raise ShapeError(f"tensors are rank 1-3, got shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("graph", "data", "requires_grad", "grad", "node_id", "_node", "_epoch")

    def __init__(self, graph, data, requires_grad=False, node=None):
        self.graph = graph
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = graph._next_id()
        self._node = node
        self._epoch = graph._epoch

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        kind = "leaf" if self._node is None else self._node.op
        return f"Tensor(shape={self.data.shape}, {kind}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Node:
    __slots__ = ("op", "inputs", "vjp", "out")

    def __init__(self, op, inputs, vjp):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp
        self.out = None


class Graph:
    """Owns leaves and one clearable tape of op nodes."""

    def __init__(self):
        self._tape = []
        self._id_counter = 0
        self._epoch = 0
        self._grad_enabled = True
        self.peak_live_nodes = 0

    def _next_id(self):
        self._id_counter += 1
        return self._id_counter

    @property
    def live_node_count(self):
        return len(self._tape)

    def reset_peak(self):
        self.peak_live_nodes = len(self._tape)

    def clear(self):
        """Free every recorded node; outputs built on them go stale."""
        self._tape.clear()
        self._epoch += 1

    def no_grad(self):
        return _NoGrad(self)

    def tensor(self, data, requires_grad=False):
        return Tensor(self, _as_f64(data).copy(), requires_grad=requires_grad)

    def parameter(self, data):
        return self.tensor(data, requires_grad=True)

    def constant(self, data):
        return Tensor(self, _as_f64(data), requires_grad=False)


class _NoGrad:
    def __init__(self, graph):
        self.graph = graph

    def __enter__(self):
        self.prev = self.graph._grad_enabled
        self.graph._grad_enabled = False
        return self

    def __exit__(self, *exc):
        self.graph._grad_enabled = self.prev
        return False


def _record(graph, op, inputs, out_data, vjp):
    """Create the output tensor, taping a node when gradients are active."""
    track = graph._grad_enabled and any(t.requires_grad for t in inputs)
    for t in inputs:
        if t._node is not None and t._epoch != graph._epoch:
            raise RuntimeError(
                f"stale tensor from a cleared tape used in op '{op}'; "
                "carry values across clears via stop_gradient or .data"
            )
    if not track:
        return Tensor(graph, out_data, requires_grad=False)
    node = Node(op, tuple(inputs), vjp)
    out = Tensor(graph, out_data, requires_grad=True, node=node)
    node.out = out
    graph._tape.append(node)
    if len(graph._tape) > graph.peak_live_nodes:
        graph.peak_live_nodes = len(graph._tape)
    return out


def backward(loss, watch=()):
    """Propagate d(loss)/d(x) from a scalar-shaped loss tensor.

    Gradients accumulate into ``.grad`` of requires_grad leaves.  ``watch``
    may list any tensors (leaves or op outputs); the returned dict maps each
    to its gradient array, or to a zero array if no path reaches it.
    """
    if loss.data.shape != (1,):
        raise ShapeError(f"backward needs a (1,)-shaped loss, got {loss.data.shape}")
    watched = {id(t): t for t in watch}
    results = {id(t): np.zeros_like(t.data) for t in watch}
    grads = {id(loss): np.ones(1)}
    if loss._node is None:
        for t in watch:
            if t is loss:
                results[id(t)] = grads[id(loss)]
        return {watched[k]: v for k, v in results.items()}

    reach = set()
    stack = [loss._node]
    while stack:
        node = stack.pop()
        if id(node) in reach:
            continue
        reach.add(id(node))
        for t in node.inputs:
            if t._node is not None and t.requires_grad:
                stack.append(t._node)

    for node in reversed(loss.graph._tape):
        if id(node) not in reach:
            continue
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        if id(node.out) in results:
            results[id(node.out)] = results[id(node.out)] + g
        for t, ig in zip(node.inputs, node.vjp(g)):
            if ig is None or not t.requires_grad:
                continue
            if t._node is None:
                t.grad = ig if t.grad is None else t.grad + ig
                if id(t) in results:
                    results[id(t)] = results[id(t)] + ig
            else:
                acc = grads.get(id(t))
                grads[id(t)] = ig if acc is None else acc + ig
    return {watched[k]: v for k, v in results.items()}


def stop_gradient(x):
    """Pass values through while recording no differentiation parents.

    Downstream gradients can never reach x or anything that produced it.
    Idempotent: applying it to a leaf constant returns the tensor itself.
    """
    if x._node is None and not x.requires_grad:
        return x
    return Tensor(x.graph, x.data, requires_grad=False)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape} do not agree")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _record(a.graph, "matmul", [a, b], out, vjp)


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} vs {b.data.shape}")
    return _record(a.graph, "add", [a, b], a.data + b.data, lambda g: (g, g))


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shapes {a.data.shape} vs {b.data.shape}")
    return _record(a.graph, "sub", [a, b], a.data - b.data, lambda g: (g, -g))


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes {a.data.shape} vs {b.data.shape}")

    def vjp(g):
        return g * b.data, g * a.data

    return _record(a.graph, "mul", [a, b], a.data * b.data, vjp)


def affine(x, scale_by, shift=0.0):
    """Elementwise scale_by * x + shift with python-float coefficients."""
    return _record(x.graph, "affine", [x], scale_by * x.data + shift,
                   lambda g: (scale_by * g,))


def scale(x, c):
    return affine(x, c, 0.0)


def tanh(x):
    out = np.tanh(x.data)
    return _record(x.graph, "tanh", [x], out, lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _record(x.graph, "sigmoid", [x], out, lambda g: (g * out * (1.0 - out),))


def relu(x):
    out = np.maximum(x.data, 0.0)
    return _record(x.graph, "relu", [x], out, lambda g: (g * (out > 0.0),))


def linear(x, w, b=None):
    """x @ w (+ b) with x (n,k), w (k,m), b (m,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear shapes {x.data.shape} x {w.data.shape} do not agree")
    out = x.data @ w.data
    if b is None:
        def vjp(g):
            return g @ w.data.T, x.data.T @ g

        return _record(x.graph, "linear", [x, w], out, vjp)
    out = out + b.data

    def vjp(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _record(x.graph, "linear", [x, w, b], out, vjp)


def softmax_rows(x):
    """Row softmax with per-row max subtraction for stability."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs rank 2, got {x.data.shape}")
    p = kernels.softmax_rows_fwd(np.ascontiguousarray(x.data))
    return _record(x.graph, "softmax_rows", [x], p,
                   lambda g: (kernels.softmax_rows_bwd(p, np.ascontiguousarray(g)),))


def attn(q, k, v, mask=None):
    """Scaled dot-product attention: softmax(q k^T / sqrt(d) + mask) v.

    mask is a boolean (Lq, Lk) array, True = attendable.  A query row with
    no attendable key is an error rather than a silent NaN.
    """
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("attn operands must be rank 2")
    if q.data.shape[1] != k.data.shape[1]:
        raise ShapeError(f"attn q/k dims {q.data.shape} vs {k.data.shape}")
    if k.data.shape[0] != v.data.shape[0]:
        raise ShapeError(f"attn k/v lengths {k.data.shape} vs {v.data.shape}")
    if k.data.shape[0] == 0:
        raise ValueError("attn with zero keys")
    sc = 1.0 / math.sqrt(q.data.shape[1])
    scores = (q.data @ k.data.T) * sc
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.shape:
            raise ShapeError(f"mask shape {mask.shape} vs scores {scores.shape}")
        if not mask.any(axis=1).all():
            bad = int(np.flatnonzero(~mask.any(axis=1))[0])
            raise ValueError(f"attn query row {bad} is fully masked")
        scores = np.where(mask, scores, -np.inf)
    p = kernels.softmax_rows_fwd(np.ascontiguousarray(scores))
    out = p @ v.data

    def vjp(g):
        dv = p.T @ g
        dp = g @ v.data.T
        ds = kernels.softmax_rows_bwd(p, np.ascontiguousarray(dp)) * sc
        return ds @ k.data, ds.T @ q.data, dv

    return _record(q.graph, "attn", [q, k, v], out, vjp)


def conv1d_compress(x, kernel, ratio):
    """Stride-r kernel-size-r sequence convolution, d channels in and out.

    The input is head-padded with zero rows to a multiple of r so the most
    recent rows land in complete windows.  L = 0 yields a (0, d) output.
    """
    if ratio < 1:
        raise ShapeError(f"compression ratio must be >= 1, got {ratio}")
    L, d = x.data.shape
    if kernel.data.shape != (ratio, d, d):
        raise ShapeError(
            f"conv kernel shape {kernel.data.shape} does not match (r={ratio}, d={d}, d={d})"
        )
    pad = (-L) % ratio
    xp = np.concatenate([np.zeros((pad, d)), x.data], axis=0) if pad else x.data
    xp = np.ascontiguousarray(xp)
    kd = np.ascontiguousarray(kernel.data)
    out = kernels.conv_compress_fwd(xp, kd) if L else np.zeros((0, d))

    def vjp(g):
        if L == 0:
            return np.zeros((0, d)), np.zeros_like(kernel.data)
        gxp, gk = kernels.conv_compress_bwd(xp, kd, np.ascontiguousarray(g))
        return gxp[pad:], gk

    return _record(x.graph, "conv1d_compress", [x, kernel], out, vjp)


def layernorm(x, gain, bias, eps=1e-5):
    """Row layer normalization with affine parameters, epsilon-guarded."""
    if x.data.ndim != 2 or gain.data.shape != (x.data.shape[1],):
        raise ShapeError(f"layernorm shapes x={x.data.shape} gain={gain.data.shape}")
    xhat, rstd = kernels.layernorm_fwd(np.ascontiguousarray(x.data), eps)
    out = xhat * gain.data + bias.data

    def vjp(g):
        dxhat = np.ascontiguousarray(g * gain.data)
        dx = kernels.layernorm_bwd(xhat, rstd, dxhat)
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _record(x.graph, "layernorm", [x, gain, bias], out, vjp)


def embedding(table, ids):
    """Gather rows of table by int ids; gradients scatter-add back."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _record(table.graph, "embedding", [table], out, vjp)


def cross_entropy(logits, targets, ignore_id=None):
    """Token-mean softmax cross entropy over rows of logits.

    Rows whose target equals ignore_id contribute nothing; if every row is
    ignored the loss is exactly 0 with zero gradient.
    """
    t = np.asarray(targets, dtype=np.int64).copy()
    if t.ndim != 1 or t.shape[0] != logits.data.shape[0]:
        raise ShapeError(f"targets shape {t.shape} vs logits {logits.data.shape}")
    if ignore_id is not None:
        t[t == ignore_id] = -1
    if t.size and ((t >= logits.data.shape[1]) | (t < -1)).any():
        raise ShapeError("target id out of vocabulary range")
    nll, probs = kernels.cross_entropy_fwd(np.ascontiguousarray(logits.data), t)
    n_kept = int((t >= 0).sum())
    loss = np.array([nll.sum() / n_kept]) if n_kept else np.zeros(1)

    def vjp(g):
        if n_kept == 0:
            return (np.zeros_like(logits.data),)
        grad_nll = np.where(t >= 0, g[0] / n_kept, 0.0)
        return (kernels.cross_entropy_bwd(probs, t, grad_nll),)

    return _record(logits.graph, "cross_entropy", [logits], loss, vjp)


def concat_rows(parts):
    """Stack rank-2 tensors along the row axis; zero-row parts are fine."""
    if not parts:
        raise ShapeError("concat_rows of nothing")
    sizes = [p.data.shape[0] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=0)

    def vjp(g):
        offs = np.cumsum([0] + sizes)
        return tuple(g[offs[i]:offs[i + 1]] for i in range(len(parts)))

    return _record(parts[0].graph, "concat_rows", list(parts), out, vjp)


def concat_cols(parts):
    if not parts:
        raise ShapeError("concat_cols of nothing")
    sizes = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)

    def vjp(g):
        offs = np.cumsum([0] + sizes)
        return tuple(g[:, offs[i]:offs[i + 1]] for i in range(len(parts)))

    return _record(parts[0].graph, "concat_cols", list(parts), out, vjp)


def slice_rows(x, start, stop):
    out = x.data[start:stop].copy()

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)

    return _record(x.graph, "slice_rows", [x], out, vjp)


def slice_cols(x, start, stop):
    out = x.data[:, start:stop].copy()

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _record(x.graph, "slice_cols", [x], out, vjp)


def sum_all(x):
    out = np.array([x.data.sum()])
    return _record(x.graph, "sum_all", [x], out,
                   lambda g: (np.full_like(x.data, g[0]),))


def mean_all(x):
    n = x.data.size
    out = np.array([x.data.sum() / n])
    return _record(x.graph, "mean_all", [x], out,
                   lambda g: (np.full_like(x.data, g[0] / n),))
