import unittest
import sys
import os
import tempfile

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.errors import DataError, GraphStateError, ShapeError
from src.tensornet import kernels
from src.tensornet.checkpoint import checkpoint_paths, load_checkpoint, save_checkpoint
from src.tensornet.gradcheck import gradient_check, gradient_check_report, relative_error
from src.tensornet.graph import ModelGraph, backward, count_params
from src.tensornet.layers import (
    ChannelConv1D,
    Conv1D,
    ExpandChannels,
    LSTM,
    LastTimestep,
    LayerNorm,
    Linear,
    MergeChannels,
    MultiHeadSelfAttention,
    Parameter,
    PositionalEncoding,
    ReLU,
    Residual,
    TemporalAttentionPool,
    TemporalPad,
    sinusoidal_encoding,
)
from src.tensornet.optim import adam_step


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def batch(shape, classes, seed=0, size=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(size,) + tuple(shape)), rng.integers(0, classes, size=size)


class TestKernels(unittest.TestCase):
    """Test cases for the stateless kernels against direct formulas."""

    def test_linear_shapes(self):
        out = kernels.linear_forward(np.ones((2, 5, 3)), np.ones((3, 4)), np.zeros(4))
        self.assertEqual(out.shape, (2, 5, 4))
        np.testing.assert_array_equal(out, 3.0)
        with self.assertRaises(ShapeError) as ctx:
            kernels.linear_forward(np.ones((2, 5)), np.ones((3, 4)), np.zeros(4))
        self.assertIn("2x5", str(ctx.exception))

    def test_conv1d_matches_loops(self):
        rng = np.random.default_rng(0)
        for stride in (1, 2, 3):
            with self.subTest(stride=stride):
                x = rng.normal(size=(2, 11, 3))
                w = rng.normal(size=(4, 3, 5))
                b = rng.normal(size=5)
                out = kernels.conv1d_forward(x, w, b, stride)
                T_out = kernels.conv1d_output_length(11, 4, stride)
                self.assertEqual(out.shape, (2, T_out, 5))
                expected = np.zeros_like(out)
                for bi in range(2):
                    for t in range(T_out):
                        for o in range(5):
                            expected[bi, t, o] = np.sum(x[bi, t * stride:t * stride + 4, :] * w[:, :, o]) + b[o]
                np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_conv1d_kernel_longer_than_input(self):
        self.assertEqual(kernels.conv1d_output_length(3, 5, 1), 0)
        with self.assertRaises(ShapeError) as ctx:
            kernels.conv1d_forward(np.zeros((1, 3, 2)), np.zeros((5, 2, 1)), np.zeros(1))
        self.assertIn("K=5", str(ctx.exception))

    def test_lstm_single_step(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 1, 3))
        Wx, Wh, b = rng.normal(size=(3, 8)), rng.normal(size=(2, 8)), rng.normal(size=8)
        z = x[:, 0] @ Wx + b
        # zero initial state: the forget gate multiplies c = 0
        i, g, o = sigmoid(z[:, :2]), np.tanh(z[:, 4:6]), sigmoid(z[:, 6:])
        c = i * g
        expected = o * np.tanh(c)
        np.testing.assert_allclose(kernels.lstm_forward(x, Wx, Wh, b)[:, 0], expected, atol=1e-12)

    def test_lstm_recurrence(self):
        """Three steps against a per-unit scalar loop, so Wh and the forget gate both matter."""
        rng = np.random.default_rng(4)
        B, T, Din, H = 2, 3, 2, 3
        x = rng.normal(size=(B, T, Din))
        Wx, Wh, b = rng.normal(size=(Din, 4 * H)), rng.normal(size=(H, 4 * H)), rng.normal(size=4 * H)

        def gate(n, k, xt, h):
            column = n * H + k
            return sum(xt[d] * Wx[d, column] for d in range(Din)) + \
                sum(h[j] * Wh[j, column] for j in range(H)) + b[column]

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        expected = np.zeros((B, T, H))
        for n_b in range(B):
            h, c = [0.0] * H, [0.0] * H
            for t in range(T):
                xt = x[n_b, t]
                new_h, new_c = [], []
                for k in range(H):
                    i = sig(gate(0, k, xt, h))
                    f = sig(gate(1, k, xt, h))
                    g = np.tanh(gate(2, k, xt, h))
                    o = sig(gate(3, k, xt, h))
                    new_c.append(f * c[k] + i * g)
                    new_h.append(o * np.tanh(new_c[-1]))
                h, c = new_h, new_c
                expected[n_b, t] = h

        np.testing.assert_allclose(kernels.lstm_forward(x, Wx, Wh, b), expected, atol=1e-12)

        # the recurrent weights reach later steps only
        no_recurrence = kernels.lstm_forward(x, Wx, np.zeros_like(Wh), b)
        np.testing.assert_allclose(no_recurrence[:, 0], expected[:, 0], atol=1e-12)
        self.assertGreater(np.abs(no_recurrence[:, 2] - expected[:, 2]).max(), 1e-6)

    def test_lstm_zero_parameters(self):
        x = np.random.default_rng(5).normal(size=(2, 4, 3))
        out = kernels.lstm_forward(x, np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
        np.testing.assert_array_equal(out, np.zeros((2, 4, 2)))

    def test_lstm_shape_errors(self):
        with self.assertRaises(ShapeError):
            kernels.lstm_forward(np.zeros((1, 2, 3)), np.zeros((3, 8)), np.zeros((2, 7)), np.zeros(8))

    def test_softmax_is_stable(self):
        probs = kernels.softmax(np.array([[1000.0, 1000.0, -1000.0]]))
        np.testing.assert_allclose(probs, [[0.5, 0.5, 0.0]], atol=1e-12)

    def test_single_head_attention(self):
        rng = np.random.default_rng(2)
        E = 4
        x = rng.normal(size=(3, E))
        p = {k: rng.normal(size=(E, E)) for k in ("Wq", "Wk", "Wv", "Wo")}
        p.update({k: rng.normal(size=E) for k in ("bq", "bv", "bo")})
        q, k, v = x @ p["Wq"] + p["bq"], x @ p["Wk"], x @ p["Wv"] + p["bv"]
        scores = q @ k.T / np.sqrt(E)
        weights = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
        expected = weights @ v @ p["Wo"] + p["bo"]
        np.testing.assert_allclose(kernels.self_attention_forward(x, p, heads=1), expected, atol=1e-12)

    def test_attention_head_divisibility(self):
        p = {k: np.zeros((6, 6)) for k in ("Wq", "Wk", "Wv", "Wo")}
        p.update({k: np.zeros(6) for k in ("bq", "bv", "bo")})
        with self.assertRaises(ShapeError):
            kernels.self_attention_forward(np.zeros((2, 6)), p, heads=4)

    def test_cross_entropy(self):
        loss, d = kernels.softmax_cross_entropy(np.zeros((4, 5)), [0, 1, 2, 3])
        self.assertAlmostEqual(loss, np.log(5.0), places=12)
        np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-15)
        self.assertAlmostEqual(d[0, 0], (0.2 - 1.0) / 4)
        with self.assertRaises(ValueError):
            kernels.softmax_cross_entropy(np.zeros((2, 3)), [0, 3])

    def test_cross_entropy_two_logits(self):
        """For logits (1, 2) the true-class loss is ln(1 + e) - 1 for class 1 and ln(1 + e) for class 0."""
        logits = np.array([[1.0, 2.0]])
        self.assertAlmostEqual(kernels.softmax_cross_entropy(logits, [1])[0], np.log1p(np.e) - 1.0, places=12)
        self.assertAlmostEqual(kernels.softmax_cross_entropy(logits, [0])[0], np.log1p(np.e), places=12)

    def test_linear_hand_examples(self):
        np.testing.assert_array_equal(kernels.linear_forward(np.eye(2), np.eye(2), np.zeros(2)), np.eye(2))
        out = kernels.linear_forward(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2))
        np.testing.assert_array_equal(out, [[7.0, 10.0]])

    def test_sinusoidal_encoding(self):
        pe = sinusoidal_encoding(4, 6)
        np.testing.assert_array_equal(pe[0], [0, 1, 0, 1, 0, 1])
        self.assertAlmostEqual(pe[1, 0], np.sin(1.0))
        self.assertAlmostEqual(pe[2, 3], np.cos(2.0 / 10000 ** (2 / 6)))


class TestLayerGradients(unittest.TestCase):
    """Backpropagation through each layer type agrees with finite differences."""

    def check(self, layers, shape, classes, scalars=120):
        graph = ModelGraph(layers, shape, classes, name="layer_stack")
        report = gradient_check_report(graph, batch(shape, classes), max_scalars=scalars)
        self.assertGreater(report.checked, 0)
        self.assertTrue(report.passed(1e-4), f"{report.worst_parameter}: {report.max_relative_error:.3e}")
        return report

    def test_conv_lstm_stack(self):
        rng = np.random.default_rng(0)
        self.check([TemporalPad(1, 1), Conv1D(3, 4, 3, rng), LSTM(4, 5, rng), LastTimestep(), Linear(5, 3, rng)],
                   (6, 3), 3)

    def test_strided_channel_conv(self):
        rng = np.random.default_rng(1)
        self.check([ExpandChannels(), TemporalPad(1, 1), ChannelConv1D(1, 2, 3, rng, stride=2), MergeChannels(),
                    TemporalAttentionPool(6, rng), Linear(6, 3, rng)], (6, 3), 3)

    def test_attention_block(self):
        rng = np.random.default_rng(2)
        self.check([PositionalEncoding(4), Residual(MultiHeadSelfAttention(4, 2, rng)), LayerNorm(4),
                    TemporalAttentionPool(4, rng), Linear(4, 3, rng)], (5, 4), 3)

    def test_relu_kinks_are_not_counted_as_errors(self):
        rng = np.random.default_rng(3)
        report = self.check([Linear(3, 8, rng), ReLU(), LastTimestep(), Linear(8, 2, rng)], (4, 3), 2, scalars=60)
        self.assertGreaterEqual(report.skipped_kinks, 0)

    def test_parameterless_graph_passes(self):
        graph = ModelGraph([LastTimestep()], (4, 3), 3)
        self.assertEqual(gradient_check(graph, batch((4, 3), 3)), 0.0)

    def test_relative_error_floor(self):
        self.assertEqual(relative_error(0.0, 0.0), 0.0)
        self.assertAlmostEqual(relative_error(1.0, 0.5), 0.5 / 1.5)


class TestModelGraph(unittest.TestCase):
    """Test cases for ModelGraph bookkeeping."""

    def setUp(self):
        rng = np.random.default_rng(4)
        self.graph = ModelGraph([Linear(3, 4, rng), LastTimestep(), Linear(4, 2, rng)], (5, 3), 2, name="tiny")

    def test_parameter_registry(self):
        self.assertEqual(count_params(self.graph), 3 * 4 + 4 + 4 * 2 + 2)
        self.assertEqual([p.name for p in self.graph.parameters()],
                         ["0.linear.weight", "0.linear.bias", "2.linear.weight", "2.linear.bias"])

    def test_backward_requires_forward(self):
        with self.assertRaises(GraphStateError):
            self.graph.backward(np.zeros((1, 2)))

    def test_backward_fills_grads(self):
        X, y = batch((5, 3), 2)
        _, dlogits = kernels.softmax_cross_entropy(self.graph.forward(X), y)
        params = backward(self.graph, dlogits)
        self.assertTrue(any(np.any(p.grad != 0) for p in params))
        with self.assertRaises(GraphStateError):
            self.graph.backward(dlogits)

    def test_input_shape_is_checked(self):
        with self.assertRaises(ShapeError):
            self.graph.forward(np.zeros((2, 4, 3)))

    def test_cast_to_float32(self):
        single = self.graph.cast(np.float32)
        X, _ = batch((5, 3), 2)
        out = single.forward(X)
        self.assertEqual(out.dtype, np.float32)
        np.testing.assert_allclose(out, self.graph.forward(X), atol=1e-4)
        self.assertEqual(self.graph.dtype, np.float64)

    def test_state_dict_round_trip(self):
        state = self.graph.state_dict()
        for p in self.graph.parameters():
            p.value[...] = 0.0
        self.graph.load_state_dict(state)
        np.testing.assert_array_equal(self.graph.parameters()[0].value, state["0.linear.weight"])


class TestAdam(unittest.TestCase):
    """Test cases for the optimizer."""

    def test_first_step_moves_by_lr(self):
        p = Parameter(np.array([1.0, -1.0]))
        p.grad[...] = [2.0, -0.5]
        adam_step([p], lr=0.01)
        np.testing.assert_allclose(p.value, [0.99, -0.99], atol=1e-8)
        self.assertEqual(p.step, 1)
        np.testing.assert_array_equal(p.grad, 0.0)

    def test_minimizes_a_quadratic(self):
        p = Parameter(np.array([3.0]))
        for _ in range(2000):
            p.grad[...] = 2.0 * p.value
            adam_step([p], lr=0.01)
        self.assertLess(abs(p.value[0]), 5e-2)


class TestCheckpoint(unittest.TestCase):
    """Test cases for checkpoint save and load."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.prefix = os.path.join(self.tmp.name, "ckpt", "model")

    def tearDown(self):
        self.tmp.cleanup()

    def _graph(self, seed):
        rng = np.random.default_rng(seed)
        return ModelGraph([Linear(3, 4, rng), LastTimestep(), Linear(4, 2, rng)], (5, 3), 2, name="tiny")

    def test_round_trip(self):
        source, target = self._graph(0), self._graph(1)
        digest = save_checkpoint(source, self.prefix, seed=0)
        manifest = load_checkpoint(self.prefix, target)
        self.assertEqual(manifest["sha256"], digest)
        X, _ = batch((5, 3), 2)
        np.testing.assert_array_equal(source.forward(X), target.forward(X))

    def test_tampered_blob(self):
        save_checkpoint(self._graph(0), self.prefix)
        blob_path = checkpoint_paths(self.prefix)[1]
        with open(blob_path, "r+b") as f:
            f.write(b"\x00" * 8)
        with self.assertRaises(DataError):
            load_checkpoint(self.prefix, self._graph(1))

    def test_layout_mismatch(self):
        save_checkpoint(self._graph(0), self.prefix)
        rng = np.random.default_rng(0)
        other = ModelGraph([Linear(3, 2, rng), LastTimestep()], (5, 3), 2)
        with self.assertRaises(DataError):
            load_checkpoint(self.prefix, other)


if __name__ == '__main__':
    unittest.main()
