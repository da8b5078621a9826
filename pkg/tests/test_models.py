import unittest
import sys
import os
import tempfile

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.errors import ConfigError, ShapeError
from src.models.builders import (
    MIN_WINDOW,
    MODEL_NAMES,
    ModelSpec,
    build_deepconvlstm,
    build_model,
    build_sahar,
    build_tinyhar,
    conv_lengths,
    load_model,
    parse_model_name,
)
from src.models.predict import majority_vote, predict_proba, predict_trial, predict_window
from src.tensornet.checkpoint import save_checkpoint
from src.tensornet.gradcheck import gradient_check_report
from src.tensornet.kernels import softmax_cross_entropy
from src.tensornet.optim import adam_step

SMALL = {
    "tinyhar": {"filters": 4},
    "deepconvlstm": {"filters": 4, "hidden": 6},
    "sahar": {"embed": 8, "heads": 2, "ff": 8},
}


def toy_windows(W, D, classes=5, per_class=4, seed=0):
    """Separable windows: one fixed random pattern per class plus small noise."""
    rng = np.random.default_rng(seed)
    patterns = rng.normal(size=(classes, W, D))
    y = np.repeat(np.arange(classes), per_class)
    X = patterns[y] + 0.1 * rng.normal(size=(len(y), W, D))
    return X, y


class TestParameterCounts(unittest.TestCase):
    """Exact parameter counts of the default configurations at (32, 48, 5)."""

    def test_exact_counts(self):
        expected = {"tinyhar": 38181, "deepconvlstm": 932357, "sahar": 296325}
        for name, count in expected.items():
            with self.subTest(model=name):
                self.assertEqual(build_model(ModelSpec(name)).parameter_count, count)

    def test_size_ordering(self):
        tiny = build_tinyhar(32, 48, 5).parameter_count
        dcl = build_deepconvlstm(32, 48, 5).parameter_count
        sahar = build_sahar(32, 48, 5).parameter_count
        self.assertTrue(30000 <= tiny <= 60000)
        self.assertGreaterEqual(dcl / tiny, 15)
        self.assertGreaterEqual(sahar / tiny, 6)

    def test_userid_head_changes_only_the_classifier(self):
        five = build_tinyhar(32, 48, 5).parameter_count
        four = build_tinyhar(32, 48, 4).parameter_count
        self.assertEqual(five - four, 2 * 16 + 1)


class TestShapes(unittest.TestCase):
    """Test cases for model input and output shapes."""

    def test_output_shapes(self):
        X = np.random.default_rng(0).normal(size=(3, 16, 16))
        for name in MODEL_NAMES:
            with self.subTest(model=name):
                graph = build_model(ModelSpec(name, window=16, dims=16, classes=4))
                self.assertEqual(graph.forward(X).shape, (3, 4))

    def test_minimum_window(self):
        for name in MODEL_NAMES:
            with self.subTest(model=name):
                build_model(ModelSpec(name, window=MIN_WINDOW[name], dims=16, classes=5))
                with self.assertRaises(ConfigError) as ctx:
                    build_model(ModelSpec(name, window=MIN_WINDOW[name] - 1, dims=16, classes=5))
                self.assertIn(f"W >= {MIN_WINDOW[name]}", str(ctx.exception))

    def test_conv_length_arithmetic(self):
        self.assertEqual(conv_lengths(32, 5, [2, 2, 1, 1]), [16, 8, 8, 8])
        self.assertEqual(conv_lengths(8, 5, [2, 2, 1, 1]), [4, 2, 2, 2])

    def test_wrong_input_is_rejected(self):
        graph = build_tinyhar(16, 16, 5)
        with self.assertRaises(ShapeError):
            graph.forward(np.zeros((2, 16, 48)))

    def test_invalid_specs(self):
        with self.assertRaises(ConfigError):
            parse_model_name("resnet")
        with self.assertRaises(ConfigError):
            build_tinyhar(32, 48, 1)
        with self.assertRaises(ConfigError):
            build_model(ModelSpec("sahar", hyperparameters={"depth": 3}))

    def test_name_aliases(self):
        self.assertEqual(parse_model_name("SA-HAR"), "sahar")
        self.assertEqual(parse_model_name("DeepConvLSTM"), "deepconvlstm")

    def test_same_seed_same_weights(self):
        a = build_sahar(8, 4, 3, seed=5, **SMALL["sahar"])
        b = build_sahar(8, 4, 3, seed=5, **SMALL["sahar"])
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.value, pb.value)


class TestModelGradients(unittest.TestCase):
    """Finite-difference checks of reduced-width variants of each model."""

    def test_gradients(self):
        rng = np.random.default_rng(1)
        for name in MODEL_NAMES:
            with self.subTest(model=name):
                W = MIN_WINDOW[name]
                graph = build_model(ModelSpec(name, window=W, dims=3, classes=3, hyperparameters=SMALL[name]))
                X = rng.normal(size=(2, W, 3))
                report = gradient_check_report(graph, (X, np.array([0, 2])), max_scalars=100)
                self.assertGreater(report.checked, 0)
                self.assertTrue(report.passed(1e-4), f"{report.worst_parameter}: {report.max_relative_error:.3e}")


class TestOverfit(unittest.TestCase):
    """Each model fits a 20-window separable toy set within 300 steps."""

    def test_overfit_toy_set(self):
        X, y = toy_windows(16, 16)
        for name in MODEL_NAMES:
            with self.subTest(model=name):
                graph = build_model(ModelSpec(name, window=16, dims=16, classes=5, seed=3))
                fitted = False
                for _ in range(300):
                    logits = graph.forward(X)
                    if np.all(np.argmax(logits, axis=1) == y):
                        fitted = True
                        break
                    _, dlogits = softmax_cross_entropy(logits, y)
                    graph.backward(dlogits)
                    adam_step(graph.parameters(), lr=2e-3)
                self.assertTrue(fitted)


class TestPrediction(unittest.TestCase):
    """Test cases for window and trial prediction."""

    def test_majority_vote_ties(self):
        cases = [
            ([[0.9, 0.1], [0.9, 0.1], [0.4, 0.6]], 0),
            ([[0.6, 0.4], [0.3, 0.7]], 1),
            ([[0.6, 0.4], [0.4, 0.6]], 0),
            ([[0.2, 0.3, 0.5]], 2),
        ]
        for probs, expected in cases:
            with self.subTest(probs=probs):
                self.assertEqual(majority_vote(np.array(probs)), expected)
        with self.assertRaises(ValueError):
            majority_vote(np.zeros((0, 3)))

    def test_predict_window_and_trial(self):
        graph = build_tinyhar(8, 4, 3, **SMALL["tinyhar"])
        windows = np.random.default_rng(2).normal(size=(5, 8, 4))
        probs = predict_proba(graph, windows, batch_size=2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)
        label, vector = predict_window(graph, windows[0])
        self.assertEqual(label, int(np.argmax(probs[0])))
        np.testing.assert_allclose(vector, probs[0])
        self.assertEqual(predict_trial(graph, windows), majority_vote(probs))
        with self.assertRaises(ShapeError):
            predict_window(graph, windows[0].T)

    def test_load_model_from_checkpoint(self):
        graph = build_deepconvlstm(16, 3, 4, seed=9, **SMALL["deepconvlstm"])
        with tempfile.TemporaryDirectory() as tmp:
            prefix = os.path.join(tmp, "dcl")
            save_checkpoint(graph, prefix, seed=9)
            restored = load_model(prefix)
        X = np.random.default_rng(3).normal(size=(2, 16, 3))
        np.testing.assert_array_equal(restored.forward(X), graph.forward(X))
        self.assertEqual(restored.name, "DeepConvLSTM")


if __name__ == '__main__':
    unittest.main()
