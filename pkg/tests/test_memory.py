"""Memory mechanism tests: hand traces, dense oracles, gradient policy."""

import numpy as np
import pytest

from segsum import tensor as T
from segsum.attention import AttnProjections, multi_head_attention
from segsum.memory import (AttentiveParams, AttentiveState, attentive_step,
                           attentive_synthesize, attentive_update,
                           compressive_update, fresh_attentive_state,
                           fresh_compressive_state,
                           memory_augmented_self_attention)
from segsum.tensor import Graph, backward


def averaging_kernel(graph, ratio, d, requires_grad=False):
    k = np.stack([np.eye(d) / ratio for _ in range(ratio)])
    return graph.tensor(k, requires_grad=requires_grad)


def make_proj(graph, d, rng, zero_out_bias=True):
    def w():
        return graph.tensor(rng.normal(scale=0.3, size=(d, d)), requires_grad=True)

    def b():
        return graph.tensor(np.zeros(d), requires_grad=True)

    return AttnProjections(w(), w(), w(), w(), b(), b(), b(), b())


class TestCompressiveHandTrace:
    def test_first_segment(self):
        # m=4, r=2, L=2, empty memory: nothing overflows, nothing compressed.
        g = Graph()
        state = fresh_compressive_state(4, 3)
        h = g.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        kern = averaging_kernel(g, 2, 3)
        rows, new_state = compressive_update(state, h, kern, 2)
        assert new_state.valid_compressed == 0
        assert new_state.valid_uncompressed == 2
        assert np.array_equal(new_state.M[2:4], h.data)
        assert np.array_equal(new_state.M[:2], np.zeros((2, 3)))
        assert np.array_equal(rows.data, h.data)

    def test_second_segment_compresses_overflow(self):
        # After another L=2 segment the two oldest rows compress into one.
        g = Graph()
        state = fresh_compressive_state(4, 3)
        h1 = g.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        h2 = g.tensor([[10.0, 20.0, 30.0], [40.0, 50.0, 60.0]])
        kern = averaging_kernel(g, 2, 3)
        _, state = compressive_update(state, h1, kern, 2)
        rows, state = compressive_update(state, h2, kern, 2)
        assert state.valid_compressed == 1
        assert state.valid_uncompressed == 2
        assert np.allclose(state.M[0], [2.5, 3.5, 4.5])   # mean of h1's rows
        assert np.array_equal(state.M[2:4], h2.data)
        assert np.allclose(rows.data,
                           np.concatenate([[[2.5, 3.5, 4.5]], h2.data]))

    def test_compressed_half_keeps_newest(self):
        g = Graph()
        state = fresh_compressive_state(4, 1)
        kern = averaging_kernel(g, 2, 1)
        feeds = [g.tensor([[float(i)], [float(i) + 1.0]]) for i in range(1, 9, 2)]
        for h in feeds:
            _, state = compressive_update(state, h, kern, 2)
        # four L=2 segments: three overflows compressed to 1.5, 3.5, 5.5;
        # the compressed half keeps the newest two.
        assert state.valid_compressed == 2
        assert np.allclose(state.M[:2, 0], [3.5, 5.5])
        assert np.allclose(state.M[2:4, 0], [7.0, 8.0])

    def test_empty_segment_keeps_state(self):
        g = Graph()
        state = fresh_compressive_state(4, 2)
        state.M[2] = [1.0, 1.0]
        state.valid_uncompressed = 1
        kern = averaging_kernel(g, 2, 2)
        rows, new_state = compressive_update(state, g.tensor(np.zeros((0, 2))), kern, 2)
        assert new_state is state
        assert np.array_equal(rows.data, [[1.0, 1.0]])

    def test_shape_stability_random_lengths(self):
        rng = np.random.default_rng(0)
        g = Graph()
        state = fresh_compressive_state(8, 3)
        kern = averaging_kernel(g, 3, 3)
        for L in [1, 5, 2, 9, 4, 7]:
            _, state = compressive_update(
                state, g.tensor(rng.normal(size=(L, 3))), kern, 3)
            assert state.M.shape == (8, 3)
            assert state.valid_compressed <= 4
            assert state.valid_uncompressed <= 4

    def test_recency_of_uncompressed_half(self):
        rng = np.random.default_rng(1)
        g = Graph()
        state = fresh_compressive_state(6, 2)
        kern = averaging_kernel(g, 2, 2)
        seen = []
        for L in [2, 3, 1, 4]:
            h = rng.normal(size=(L, 2))
            seen.extend(h.tolist())
            _, state = compressive_update(state, g.tensor(h), kern, 2)
            expect = np.array(seen[-min(len(seen), 3):])
            got = state.M[3:3 + state.valid_uncompressed]
            assert np.allclose(got, expect)

    def test_kernel_learns_through_read(self):
        # Gradients reach the compression kernel via the returned rows.
        g = Graph()
        state = fresh_compressive_state(4, 2)
        kern = averaging_kernel(g, 2, 2, requires_grad=True)
        h1 = g.tensor(np.ones((2, 2)), requires_grad=True)
        _, state = compressive_update(state, h1, kern, 2)
        h2 = g.tensor(np.ones((2, 2)))
        rows, _ = compressive_update(state, h2, kern, 2)
        backward(T.sum_all(rows))
        assert kern.grad is not None and np.abs(kern.grad).sum() > 0
        assert h1.grad is None   # cached rows are stop-gradient


class TestAttentive:
    def test_synthesize_single_key(self):
        rng = np.random.default_rng(2)
        g = Graph()
        m_prev = g.constant(rng.normal(size=(3, 4)))
        h = g.tensor(rng.normal(size=(1, 4)))
        s = attentive_synthesize(m_prev, h)
        assert np.allclose(s.data, np.repeat(h.data, 3, axis=0))

    def test_synthesize_empty_segment_errors(self):
        g = Graph()
        with pytest.raises(ValueError, match="empty segment"):
            attentive_synthesize(g.constant(np.zeros((2, 3))),
                                 g.tensor(np.zeros((0, 3))))

    def test_synthesize_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        g = Graph()
        m_prev = g.constant(rng.normal(size=(2, 4)))
        h = g.tensor(rng.normal(size=(3, 4)))
        s = attentive_synthesize(m_prev, h)
        scores = m_prev.data @ h.data.T / 2.0
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        oracle = (e / e.sum(axis=1, keepdims=True)) @ h.data
        assert np.allclose(s.data, oracle, atol=1e-12)

    def test_synthesize_blocks_gradients_to_segment(self):
        g = Graph()
        w = g.tensor(np.ones((2, 2)), requires_grad=True)
        h = T.tanh(w)
        s = attentive_synthesize(g.constant(np.ones((2, 2))), h)
        backward(T.sum_all(s))
        assert w.grad is None

    def test_update_zero_fixed_point(self):
        # U = M^{t-1} elementwise (here both zero) keeps the memory put.
        rng = np.random.default_rng(4)
        g = Graph()
        params = AttentiveParams(*(g.tensor(rng.normal(size=(3, 3)))
                                   for _ in range(4)))
        m_prev = g.constant(np.zeros((2, 3)))
        s = g.constant(np.zeros((2, 3)))
        out = attentive_update(m_prev, s, params)
        assert np.array_equal(out.data, np.zeros((2, 3)))

    def test_update_gate_closed_limit(self):
        rng = np.random.default_rng(5)
        g = Graph()
        d = 3
        w = lambda: g.tensor(rng.normal(scale=0.5, size=(d, d)))
        params = AttentiveParams(w(), w(), g.tensor(-40.0 * np.eye(d)),
                                 g.tensor(-40.0 * np.eye(d)))
        m_prev = g.constant(rng.uniform(0.2, 1.0, size=(2, d)))
        s = g.constant(rng.uniform(0.2, 1.0, size=(2, d)))
        out = attentive_update(m_prev, s, params)
        assert np.abs(out.data - m_prev.data).max() < 1e-6

    def test_update_hand_trace_2x2(self):
        g = Graph()
        m_prev = g.constant([[0.5, -0.25], [1.0, 0.0]])
        s = g.constant([[0.2, 0.4], [-0.6, 0.1]])
        w_u1 = g.tensor([[1.0, 0.0], [0.0, -1.0]])
        w_u2 = g.tensor([[0.5, 0.5], [0.0, 1.0]])
        w_g1 = g.tensor([[2.0, 0.0], [0.0, 2.0]])
        w_g2 = g.tensor([[0.0, -1.0], [1.0, 0.0]])
        out = attentive_update(m_prev, s, AttentiveParams(w_u1, w_u2, w_g1, w_g2))
        # independent scalar recomputation of Eqs: U=tanh(M@Wu1+S@Wu2), etc.
        m, s_ = np.array(m_prev.data), np.array(s.data)
        u = np.tanh(m @ w_u1.data + s_ @ w_u2.data)
        gate = 1.0 / (1.0 + np.exp(-(m @ w_g1.data + s_ @ w_g2.data)))
        expect = gate * u + (1.0 - gate) * m
        assert np.allclose(out.data, expect, atol=1e-15)

    def test_convex_combination_law(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            g = Graph()
            d = 4
            params = AttentiveParams(*(g.tensor(rng.normal(size=(d, d)))
                                       for _ in range(4)))
            m_prev = g.constant(rng.normal(size=(3, d)))
            s = g.constant(rng.normal(size=(3, d)))
            out = attentive_update(m_prev, s, params)
            u = np.tanh(m_prev.data @ params.w_u1.data + s.data @ params.w_u2.data)
            lo = np.minimum(u, m_prev.data)
            hi = np.maximum(u, m_prev.data)
            assert (out.data >= lo - 1e-12).all()
            assert (out.data <= hi + 1e-12).all()

    def test_inf_norm_bound_over_steps(self):
        rng = np.random.default_rng(7)
        g = Graph()
        d = 4
        params = AttentiveParams(*(g.tensor(rng.normal(size=(d, d)))
                                   for _ in range(4)))
        state = fresh_attentive_state(3, d)
        for step in range(12):
            h = g.tensor(rng.normal(scale=2.0, size=(5, d)))
            _, state = attentive_step(state, h, params)
            assert np.abs(state.M).max() <= 1.0 + 1e-12
        assert state.step == 12

    def test_step_shape_stability(self):
        rng = np.random.default_rng(8)
        g = Graph()
        params = AttentiveParams(*(g.tensor(rng.normal(size=(4, 4)))
                                   for _ in range(4)))
        state = fresh_attentive_state(6, 4)
        for L in [1, 8, 3]:
            _, state = attentive_step(state, g.tensor(rng.normal(size=(L, 4))),
                                      params)
            assert state.M.shape == (6, 4)


class TestMemoryAugmentedSelfAttention:
    def test_empty_memory_equals_plain(self):
        rng = np.random.default_rng(9)
        g = Graph()
        proj = make_proj(g, 4, rng)
        h = g.tensor(rng.normal(size=(5, 4)))
        plain = multi_head_attention(h, h, proj, heads=2)
        for mem in (None, g.constant(np.zeros((0, 4)))):
            out = memory_augmented_self_attention(h, mem, proj, heads=2)
            assert np.array_equal(out.data, plain.data)

    def test_memory_row_equals_duplicated_input_row(self):
        rng = np.random.default_rng(10)
        g = Graph()
        proj = make_proj(g, 4, rng)
        h = g.tensor(rng.normal(size=(3, 4)))
        mem = g.constant(h.data[1:2].copy())
        out = memory_augmented_self_attention(h, mem, proj, heads=1)
        dup = g.constant(np.concatenate([h.data[1:2], h.data]))
        oracle = multi_head_attention(h, dup, proj, heads=1)
        assert np.allclose(out.data, oracle.data, atol=1e-12)

    def test_output_shape_tracks_queries(self):
        rng = np.random.default_rng(11)
        g = Graph()
        proj = make_proj(g, 4, rng)
        h = g.tensor(rng.normal(size=(5, 4)))
        for rows in (0, 2, 4):
            mem = g.constant(rng.normal(size=(rows, 4)))
            out = memory_augmented_self_attention(h, mem, proj, heads=2)
            assert out.data.shape == (5, 4)


class TestGradientIsolation:
    def test_three_segment_chain_attentive(self):
        """Segment-t loss reaches its own weights and the memory params but
        nothing that produced earlier segments."""
        rng = np.random.default_rng(12)
        g = Graph()
        d = 4
        params = AttentiveParams(*(g.tensor(rng.normal(size=(d, d)),
                                            requires_grad=True)
                                   for _ in range(4)))
        w = [g.tensor(rng.normal(size=(d, d)), requires_grad=True)
             for _ in range(3)]
        # nonzero carried snapshot, as mid-document (zeros would make every
        # memory row identical and the read provably query-insensitive)
        state = AttentiveState(rng.normal(size=(3, d)), step=1)

        # segment 1: produce h1 via w[0], stash stop-gradient values
        h1 = T.tanh(T.matmul(g.tensor(rng.normal(size=(5, d))), w[0]))
        pending = h1.data.copy()
        g.clear()

        # segment 2: fold pending in-graph, read, backprop a loss
        m_rows, state = attentive_step(state, g.constant(pending), params)
        h2 = T.tanh(T.matmul(g.tensor(rng.normal(size=(5, d))), w[1]))
        backward(T.sum_all(T.attn(h2, m_rows, m_rows)))
        assert w[0].grad is None
        assert np.abs(w[1].grad).sum() > 0
        for p in (params.w_u1, params.w_u2, params.w_g1, params.w_g2):
            assert p.grad is not None and np.abs(p.grad).sum() > 0
        pending = h2.data.copy()
        for p in (params.w_u1, params.w_u2, params.w_g1, params.w_g2, w[1]):
            p.zero_grad()
        g.clear()

        # segment 3: gradients still stop at the segment boundary
        m_rows, state = attentive_step(state, g.constant(pending), params)
        h3 = T.tanh(T.matmul(g.tensor(rng.normal(size=(5, d))), w[2]))
        backward(T.sum_all(T.attn(h3, m_rows, m_rows)))
        assert w[0].grad is None
        assert w[1].grad is None
        assert np.abs(w[2].grad).sum() > 0
        for p in (params.w_u1, params.w_u2, params.w_g1, params.w_g2):
            assert p.grad is not None and np.abs(p.grad).sum() > 0
