"""Edge-list message passing and convolution primitives: forward equivalence
against dense reference computations, gradients against central differences."""

import numpy as np
import pytest

import vibemesh.tensor as T
from vibemesh.tensor import EdgeStructure, Tensor

from helpers import numeric_gradient, rel_error
from test_tensor import check_op

F64 = np.float64


@pytest.fixture
def small_graph():
    # 4 nodes in a path 0-1-2-3 plus self-loops, directed both ways.
    und = [(0, 1), (1, 2), (2, 3)]
    src = [u for u, v in und] + [v for u, v in und] + [0, 1, 2, 3]
    dst = [v for u, v in und] + [u for u, v in und] + [0, 1, 2, 3]
    return EdgeStructure(4, np.array(src), np.array(dst))


def dense_from_edges(es, values):
    m = np.zeros((es.n_nodes, es.n_nodes))
    m[es.dst, es.src] = values
    return m


class TestEdgeOps:
    def test_structure_is_sorted_and_complete(self, small_graph):
        es = small_graph
        assert es.n_edges == 10
        assert np.all(np.diff(es.dst) >= 0)
        assert es.indptr[-1] == es.n_edges

    def test_missing_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            EdgeStructure(3, np.array([0, 1]), np.array([1, 0]))

    def test_aggregate_matches_dense(self, small_graph, rng):
        es = small_graph
        vals = rng.random(es.n_edges)
        x = rng.standard_normal((4, 3))
        out = T.edge_aggregate(Tensor(vals), Tensor(x), es)
        assert np.allclose(out.data, dense_from_edges(es, vals) @ x)

    def test_gather_matches_indexing(self, small_graph, rng):
        es = small_graph
        x = rng.standard_normal((4, 2))
        assert np.array_equal(T.edge_gather(Tensor(x), es, "src").data, x[es.src])
        assert np.array_equal(T.edge_gather(Tensor(x), es, "dst").data, x[es.dst])

    def test_edge_softmax_rows_sum_to_one(self, small_graph, rng):
        es = small_graph
        alpha = T.edge_softmax(Tensor(rng.standard_normal(es.n_edges)), es).data
        sums = np.add.reduceat(alpha, es.starts)
        assert np.allclose(sums, 1.0, atol=1e-6)

    def test_edge_softmax_multihead_independent(self, small_graph, rng):
        es = small_graph
        s = rng.standard_normal((es.n_edges, 3))
        joint = T.edge_softmax(Tensor(s), es).data
        for h in range(3):
            single = T.edge_softmax(Tensor(s[:, h].copy()), es).data
            assert np.allclose(joint[:, h], single)

    def test_gradients(self, small_graph, rng):
        es = small_graph
        vals = rng.random(es.n_edges).astype(F64) + 0.1
        x = rng.standard_normal((4, 3)).astype(F64)
        check_op(lambda ts: T.tensor_sum(T.exp(T.edge_aggregate(ts[0], ts[1], es))), [vals, x])
        s = rng.standard_normal((es.n_edges, 2)).astype(F64)
        mixer = rng.standard_normal((es.n_edges, 2))
        check_op(lambda ts: T.tensor_sum(T.mul(T.edge_softmax(ts[0], es), mixer)), [s])
        check_op(lambda ts: T.tensor_sum(T.sigmoid(T.edge_gather(ts[0], es, "src"))), [x])
        check_op(lambda ts: T.tensor_sum(T.sigmoid(T.edge_gather(ts[0], es, "dst"))), [x])


class TestConvPool:
    def test_conv_matches_direct_correlation(self, rng):
        x = rng.standard_normal((2, 3, 5, 4))
        w = rng.standard_normal((6, 3, 3, 3))
        b = rng.standard_normal(6)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros((2, 6, 5, 4))
        for i in range(5):
            for j in range(4):
                patch = xp[:, :, i:i + 3, j:j + 3]
                ref[:, :, i, j] = np.tensordot(patch, w, axes=([1, 2, 3], [1, 2, 3])) + b
        assert np.allclose(out, ref)

    def test_conv_gradients(self, rng):
        x = rng.standard_normal((1, 2, 4, 3)).astype(F64)
        w = rng.standard_normal((3, 2, 3, 3)).astype(F64)
        b = rng.standard_normal(3).astype(F64)
        check_op(lambda ts: T.tensor_sum(T.sigmoid(T.conv2d(ts[0], ts[1], ts[2], padding=1))), [x, w, b])

    def test_maxpool_ceil_mode_shapes(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 513, 2)))
        out = T.maxpool2d(x, 2)
        assert out.shape == (1, 2, 257, 1)

    def test_maxpool_values_and_gradient(self, rng):
        x = rng.standard_normal((2, 2, 5, 3)).astype(F64)
        out = T.maxpool2d(Tensor(x), 2).data
        assert out[0, 0, 0, 0] == x[0, 0, :2, :2].max()
        assert out[0, 0, 2, 1] == x[0, 0, 4:, 2:].max()  # shrunken border window
        check_op(lambda ts: T.tensor_sum(T.sigmoid(T.maxpool2d(ts[0], 2))), [x])
