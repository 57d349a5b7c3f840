"""Autodiff op tests: spec'd values, finite-difference oracles, node accounting."""

import numpy as np
import pytest

from segsum import tensor as T
from segsum.tensor import Graph, ShapeError, backward, stop_gradient


def fd_gradient(f, arrays, which, h=1e-5):
    """Central finite differences of scalar f w.r.t. arrays[which]."""
    base = [a.copy() for a in arrays]
    grad = np.zeros_like(base[which])
    flat = grad.reshape(-1)
    target = base[which].reshape(-1)
    for i in range(target.size):
        orig = target[i]
        target[i] = orig + h
        up = f(base)
        target[i] = orig - h
        down = f(base)
        target[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def check_op_gradients(build, shapes, n_instances=100, seed=0, rel_tol=1e-4):
    """build(g, tensors) -> output tensor; compares backward vs FD oracle."""
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        arrays = [rng.normal(size=s) for s in shapes]
        g = Graph()
        leaves = [g.tensor(a, requires_grad=True) for a in arrays]
        out = build(g, leaves)
        proj = rng.normal(size=out.data.shape)

        def scalar(arrs):
            g2 = Graph()
            with g2.no_grad():
                vals = [g2.tensor(a) for a in arrs]
                o = build(g2, vals)
            return float((o.data * proj).sum())

        loss = T.sum_all(T.mul(out, g.constant(proj))) if out.data.shape != (1,) \
            else T.mul(out, g.constant(proj))
        backward(loss)
        for i, leaf in enumerate(leaves):
            fd = fd_gradient(scalar, arrays, i)
            ad = leaf.grad if leaf.grad is not None else np.zeros_like(fd)
            err = np.max(np.abs(ad - fd)) / max(1.0, np.max(np.abs(fd)))
            assert err < rel_tol, f"instance gradient mismatch on input {i}: {err}"


class TestMatmul:
    def test_identity(self):
        g = Graph()
        a = g.tensor(np.eye(2))
        b = g.tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, [[1.0, 2.0], [3.0, 4.0]])

    def test_hand_dot(self):
        g = Graph()
        out = T.matmul(g.tensor([[1.0, 2.0]]), g.tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_shape_error_names_both(self):
        g = Graph()
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(g.tensor(np.zeros((2, 3))), g.tensor(np.zeros((2, 2))))

    def test_gradients(self):
        check_op_gradients(lambda g, ts: T.matmul(ts[0], ts[1]),
                           [(3, 4), (4, 2)], rel_tol=1e-6)


class TestSoftmax:
    def test_uniform_row(self):
        g = Graph()
        out = T.softmax_rows(g.tensor([[0.0, 0.0, 0.0]]))
        assert np.allclose(out.data, 1.0 / 3.0)

    def test_overflow_stability(self):
        g = Graph()
        out = T.softmax_rows(g.tensor([[1000.0, 0.0]]))
        assert np.isfinite(out.data).all()
        assert out.data[0, 0] == pytest.approx(1.0)
        assert out.data[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        g = Graph()
        out = T.softmax_rows(g.tensor(rng.normal(scale=5.0, size=(50, 9))))
        assert np.abs(out.data.sum(axis=1) - 1.0).max() <= 1e-12

    def test_gradients(self):
        check_op_gradients(lambda g, ts: T.softmax_rows(ts[0]), [(4, 5)], rel_tol=1e-6)


class TestAttention:
    def test_single_key_returns_value(self):
        rng = np.random.default_rng(0)
        g = Graph()
        q = g.tensor(rng.normal(size=(4, 3)))
        k = g.tensor(rng.normal(size=(1, 3)))
        v = g.tensor(rng.normal(size=(1, 3)))
        out = T.attn(q, k, v)
        assert np.allclose(out.data, np.repeat(v.data, 4, axis=0))

    def test_two_identical_keys_mix_evenly(self):
        g = Graph()
        q = g.tensor([[0.3, -0.7]])
        k = g.tensor([[1.0, 2.0], [1.0, 2.0]])
        v = g.tensor([[1.0, 0.0], [0.0, 1.0]])
        out = T.attn(q, k, v)
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_masked_matches_dense_oracle(self):
        rng = np.random.default_rng(7)
        g = Graph()
        q, k, v = (g.tensor(rng.normal(size=s)) for s in [(3, 4), (7, 4), (7, 4)])
        mask = np.ones((3, 7), dtype=bool)
        mask[:, 2] = False
        mask[:, 5] = False
        out = T.attn(q, k, v, mask=mask)
        scores = q.data @ k.data.T / np.sqrt(4.0)
        scores[~mask] = -np.inf
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        dense = (e / e.sum(axis=1, keepdims=True)) @ v.data
        assert np.array_equal(out.data, dense) or np.allclose(out.data, dense, atol=1e-15)

    def test_fully_masked_row_is_an_error(self):
        g = Graph()
        q = g.tensor(np.zeros((2, 3)))
        k = g.tensor(np.zeros((4, 3)))
        v = g.tensor(np.zeros((4, 3)))
        mask = np.ones((2, 4), dtype=bool)
        mask[1, :] = False
        with pytest.raises(ValueError, match="fully masked"):
            T.attn(q, k, v, mask=mask)

    def test_convex_combination(self):
        rng = np.random.default_rng(11)
        g = Graph()
        q, k, v = (g.tensor(rng.normal(size=s)) for s in [(5, 4), (6, 4), (6, 4)])
        mask = rng.random((5, 6)) < 0.7
        mask[:, 0] = True
        out = T.attn(q, k, v, mask=mask)
        assert (out.data <= v.data.max(axis=0) + 1e-12).all()
        assert (out.data >= v.data.min(axis=0) - 1e-12).all()

    def test_gradients(self):
        check_op_gradients(lambda g, ts: T.attn(ts[0], ts[1], ts[2]),
                           [(3, 4), (5, 4), (5, 4)], rel_tol=1e-6)

    def test_gradients_masked(self):
        mask = np.ones((3, 5), dtype=bool)
        mask[0, 1] = mask[2, 4] = False
        check_op_gradients(lambda g, ts: T.attn(ts[0], ts[1], ts[2], mask=mask),
                           [(3, 4), (5, 4), (5, 4)], n_instances=30, rel_tol=1e-6)


class TestStopGradient:
    def test_blocks_gradient_exactly(self):
        g = Graph()
        x = g.tensor(np.ones((2, 2)), requires_grad=True)
        w = g.tensor(np.full((2, 2), 0.5), requires_grad=True)
        y = stop_gradient(T.tanh(x))
        loss = T.sum_all(T.mul(y, w))
        backward(loss)
        assert x.grad is None
        assert w.grad is not None and (w.grad != 0).all()

    def test_values_identical(self):
        rng = np.random.default_rng(1)
        g = Graph()
        x = g.tensor(rng.normal(size=(3, 2)), requires_grad=True)
        y = stop_gradient(x)
        assert y.data is x.data
        assert y._node is None and not y.requires_grad

    def test_idempotent(self):
        g = Graph()
        x = g.tensor(np.ones((2, 2)), requires_grad=True)
        y = stop_gradient(x)
        z = stop_gradient(y)
        assert z is y

    def test_node_count_excludes_freed_producer_chain(self):
        g = Graph()
        x0 = g.tensor(np.ones((2, 2)), requires_grad=True)
        x = T.tanh(T.mul(T.tanh(x0), x0))
        assert g.live_node_count == 3
        y = stop_gradient(x)
        g.clear()
        assert g.live_node_count == 0
        w = g.tensor(np.ones((2, 2)), requires_grad=True)
        out = T.sum_all(T.mul(y, w))
        assert g.live_node_count == 2
        g2 = Graph()
        w2 = g2.tensor(np.ones((2, 2)), requires_grad=True)
        T.sum_all(T.mul(g2.constant(x.data), w2))
        assert g.live_node_count == g2.live_node_count
        backward(out)
        assert np.allclose(w.grad, np.tanh(np.tanh(1.0) * 1.0))


class TestConvCompress:
    def test_identity_kernel(self):
        rng = np.random.default_rng(2)
        g = Graph()
        x = g.tensor(rng.normal(size=(4, 3)))
        kern = g.tensor(np.eye(3)[None, :, :])
        out = T.conv1d_compress(x, kern, 1)
        assert np.allclose(out.data, x.data)

    def test_averaging_kernel(self):
        g = Graph()
        rows = np.array([[1.0, 10.0], [3.0, 20.0], [5.0, 30.0], [7.0, 40.0]])
        x = g.tensor(rows)
        kern = g.tensor(np.stack([np.eye(2) * 0.5, np.eye(2) * 0.5]))
        out = T.conv1d_compress(x, kern, 2)
        assert np.allclose(out.data, [[2.0, 15.0], [6.0, 35.0]])

    def test_head_padding(self):
        g = Graph()
        x = g.tensor([[2.0], [4.0]])
        kern = g.tensor(np.full((3, 1, 1), 1.0 / 3.0))
        out = T.conv1d_compress(x, kern, 3)
        assert np.allclose(out.data, [[2.0]])

    def test_empty_input(self):
        g = Graph()
        x = g.tensor(np.zeros((0, 3)))
        kern = g.tensor(np.zeros((2, 3, 3)))
        out = T.conv1d_compress(x, kern, 2)
        assert out.data.shape == (0, 3)

    def test_gradients(self):
        check_op_gradients(lambda g, ts: T.conv1d_compress(ts[0], ts[1], 3),
                           [(6, 3), (3, 3, 3)], rel_tol=1e-6)

    def test_gradients_with_padding(self):
        check_op_gradients(lambda g, ts: T.conv1d_compress(ts[0], ts[1], 3),
                           [(5, 2), (3, 2, 2)], n_instances=30, rel_tol=1e-6)


class TestElementwiseAndNorm:
    def test_analytic_values(self):
        g = Graph()
        assert T.tanh(g.tensor([0.0])).data[0] == 0.0
        assert T.sigmoid(g.tensor([0.0])).data[0] == 0.5

    def test_layernorm_constant_row(self):
        g = Graph()
        x = g.tensor(np.full((1, 4), 3.7))
        out = T.layernorm(x, g.tensor(np.ones(4)), g.tensor(np.zeros(4)))
        assert np.allclose(out.data, 0.0)

    def test_layernorm_gradients(self):
        check_op_gradients(lambda g, ts: T.layernorm(ts[0], ts[1], ts[2]),
                           [(3, 5), (5,), (5,)], rel_tol=1e-4)

    def test_unary_gradients(self):
        for op in (T.tanh, T.sigmoid, T.relu):
            check_op_gradients(lambda g, ts, op=op: op(ts[0]), [(3, 4)],
                               n_instances=50, rel_tol=1e-6)

    def test_binary_gradients(self):
        for op in (T.add, T.sub, T.mul):
            check_op_gradients(lambda g, ts, op=op: op(ts[0], ts[1]),
                               [(3, 4), (3, 4)], n_instances=50, rel_tol=1e-6)

    def test_linear_gradients(self):
        check_op_gradients(lambda g, ts: T.linear(ts[0], ts[1], ts[2]),
                           [(3, 4), (4, 2), (2,)], rel_tol=1e-6)

    def test_structural_gradients(self):
        check_op_gradients(
            lambda g, ts: T.concat_rows([ts[0], ts[1]]), [(2, 3), (4, 3)],
            n_instances=30, rel_tol=1e-6)
        check_op_gradients(
            lambda g, ts: T.concat_cols([ts[0], ts[1]]), [(2, 3), (2, 2)],
            n_instances=30, rel_tol=1e-6)
        check_op_gradients(lambda g, ts: T.slice_rows(ts[0], 1, 3), [(4, 3)],
                           n_instances=30, rel_tol=1e-6)
        check_op_gradients(lambda g, ts: T.slice_cols(ts[0], 0, 2), [(3, 4)],
                           n_instances=30, rel_tol=1e-6)
        check_op_gradients(lambda g, ts: T.embedding(ts[0], [2, 0, 2, 1]), [(3, 4)],
                           n_instances=30, rel_tol=1e-6)


class TestCrossEntropy:
    def test_margin_drives_loss_to_zero(self):
        # closed form on 3 classes: loss = log(1 + 2 exp(-m)) for margin m
        g = Graph()
        for m in (1.0, 5.0, 20.0):
            logits = g.tensor([[m, 0.0, 0.0]])
            loss = T.cross_entropy(logits, [0])
            assert loss.data[0] == pytest.approx(np.log(1.0 + 2.0 * np.exp(-m)))
        big = T.cross_entropy(g.tensor([[200.0, 0.0, 0.0]]), [0])
        assert big.data[0] == pytest.approx(0.0, abs=1e-80)

    def test_padding_only_targets(self):
        g = Graph()
        logits = g.tensor(np.random.default_rng(0).normal(size=(3, 5)),
                          requires_grad=True)
        loss = T.cross_entropy(logits, [9, 9, 9], ignore_id=9)
        assert loss.data[0] == 0.0
        backward(loss)
        assert np.array_equal(logits.grad, np.zeros((3, 5)))

    def test_ignores_padding_rows(self):
        g = Graph()
        logits = g.tensor([[4.0, 0.0], [0.0, 4.0], [1.0, 1.0]])
        full = T.cross_entropy(logits, [0, 1, 0], ignore_id=None)
        part = T.cross_entropy(logits, [0, 1, 9], ignore_id=9)
        expect = np.log(1.0 + np.exp(-4.0))
        assert part.data[0] == pytest.approx(expect)
        assert full.data[0] != pytest.approx(expect)

    def test_gradients(self):
        check_op_gradients(lambda g, ts: T.cross_entropy(ts[0], [2, 0, 1]),
                           [(3, 4)], rel_tol=1e-6)


class TestGraphAccounting:
    def test_baseline_restored_after_clear(self):
        g = Graph()
        w = g.tensor(np.ones((3, 3)), requires_grad=True)
        baseline = g.live_node_count
        for _ in range(3):
            loss = T.sum_all(T.tanh(T.matmul(w, w)))
            backward(loss)
            g.clear()
            assert g.live_node_count == baseline

    def test_sequential_subgraphs_do_not_accumulate(self):
        g = Graph()
        w = g.tensor(np.ones((4, 4)), requires_grad=True)

        def one_pass():
            loss = T.sum_all(T.relu(T.matmul(T.tanh(T.matmul(w, w)), w)))
            peak = g.peak_live_nodes
            backward(loss)
            g.clear()
            g.reset_peak()
            return peak

        peaks = [one_pass() for _ in range(8)]
        assert len(set(peaks)) == 1

    def test_no_grad_records_nothing(self):
        g = Graph()
        w = g.tensor(np.ones((2, 2)), requires_grad=True)
        with g.no_grad():
            T.tanh(T.matmul(w, w))
        assert g.live_node_count == 0

    def test_stale_tensor_guard(self):
        g = Graph()
        w = g.tensor(np.ones((2, 2)), requires_grad=True)
        h = T.tanh(w)
        g.clear()
        with pytest.raises(RuntimeError, match="stale"):
            T.mul(h, h)

    def test_grad_accumulates_across_backwards(self):
        g = Graph()
        w = g.tensor(np.ones((2, 2)), requires_grad=True)
        for _ in range(2):
            backward(T.sum_all(T.mul(w, w)))
            g.clear()
        assert np.allclose(w.grad, 4.0)

    def test_watch_returns_zero_for_unreachable(self):
        g = Graph()
        a = g.tensor(np.ones((2, 2)), requires_grad=True)
        b = g.tensor(np.ones((2, 2)), requires_grad=True)
        loss = T.sum_all(T.mul(a, a))
        grads = backward(loss, watch=[a, b])
        assert np.allclose(grads[a], 2.0)
        assert np.array_equal(grads[b], np.zeros((2, 2)))
