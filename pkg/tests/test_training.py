import unittest
import sys
import os

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.errors import ConfigError, DataError
from src.evaluation.training import TrainConfig, evaluate_loss, train_model, validation_split
from src.tensornet.graph import ModelGraph
from src.tensornet.layers import LastTimestep, Linear


def linear_graph(D=4, C=2, seed=0):
    rng = np.random.default_rng(seed)
    return ModelGraph([LastTimestep(), Linear(D, C, rng)], (3, D), C, name="last_step")


def random_problem(n=60, D=4, C=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3, D))
    y = rng.integers(0, C, size=n)
    groups = np.array([f"T{i // 3}" for i in range(n)], dtype=object)
    return X, y, groups


class TestValidationSplit(unittest.TestCase):
    """Test cases for the trial-level validation slice."""

    def test_holds_out_whole_groups(self):
        groups = np.array([f"T{i // 4}" for i in range(40)], dtype=object)
        train, val = validation_split(groups, 0.1, np.random.default_rng(0))
        self.assertEqual(val.sum(), 4)
        self.assertEqual(len(set(groups[val])), 1)
        self.assertFalse(set(groups[val]) & set(groups[train]))

    def test_degenerate_cases(self):
        groups = np.array(["A", "A", "B"], dtype=object)
        self.assertEqual(validation_split(groups, 0.0, np.random.default_rng(0))[1].sum(), 0)
        self.assertEqual(validation_split(groups[:2], 0.5, np.random.default_rng(0))[1].sum(), 0)
        # at least one group, never all of them
        _, val = validation_split(groups, 0.9, np.random.default_rng(0))
        self.assertEqual(len(set(groups[val])), 1)


class TestTrainModel(unittest.TestCase):
    """Test cases for the training loop."""

    def test_learns_a_separable_problem(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(80, 3, 4))
        y = (X[:, -1, 0] > 0).astype(int)
        graph = linear_graph()
        result = train_model(graph, X, y, TrainConfig(epochs=60, batch_size=16, lr=0.05, validation_fraction=0.0))
        accuracy = np.mean(np.argmax(graph.forward(X), axis=1) == y)
        self.assertGreaterEqual(accuracy, 0.95)
        self.assertIsNone(result.best_val_loss)
        self.assertEqual(result.epochs_run, 60)
        self.assertLess(result.history[-1][0], result.history[0][0])

    def test_max_steps(self):
        X, y, groups = random_problem()
        result = train_model(linear_graph(), X, y, TrainConfig(batch_size=8, max_steps=3), groups)
        self.assertEqual(result.steps, 3)
        self.assertEqual(result.epochs_run, 1)

    def test_early_stop_restores_best_weights(self):
        X, y, groups = random_problem(n=90)
        config = TrainConfig(epochs=200, batch_size=4, lr=0.2, patience=1, validation_fraction=0.2, seed=5)
        graph = linear_graph()
        result = train_model(graph, X, y, config, groups)
        self.assertTrue(result.stopped_early)
        self.assertLess(result.best_epoch, result.epochs_run)
        _, val = validation_split(groups, 0.2, np.random.default_rng(5))
        self.assertAlmostEqual(evaluate_loss(graph, X[val], y[val]), result.best_val_loss, places=12)
        self.assertEqual(min(v for _, v in result.history), result.best_val_loss)

    def test_deterministic_given_seed(self):
        X, y, groups = random_problem()
        config = TrainConfig(epochs=5, batch_size=8, seed=2)
        a, b = linear_graph(), linear_graph()
        train_model(a, X, y, config, groups)
        train_model(b, X, y, config, groups)
        for name, value in a.state_dict().items():
            np.testing.assert_array_equal(value, b.state_dict()[name])

    def test_empty_training_set(self):
        with self.assertRaises(DataError):
            train_model(linear_graph(), np.zeros((0, 3, 4)), np.zeros(0, dtype=int))

    def test_invalid_config(self):
        bad = [TrainConfig(epochs=0), TrainConfig(batch_size=0), TrainConfig(lr=0.0),
               TrainConfig(patience=0), TrainConfig(validation_fraction=1.0)]
        for config in bad:
            with self.subTest(config=config):
                with self.assertRaises(ConfigError):
                    config.validate()

    def test_with_seed(self):
        config = TrainConfig(epochs=7).with_seed(11)
        self.assertEqual((config.epochs, config.seed), (7, 11))
        self.assertEqual(config.to_dict()["seed"], 11)


if __name__ == '__main__':
    unittest.main()
