import unittest
import sys
import os
import logging
import tempfile
import time

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.utils.hashing import canonical_json, sha256_array, sha256_bytes, sha256_text
from src.utils.log import setup_logging
from src.utils.plotting import plot_confusion_matrix, plot_latency
from src.utils.timer import format_system_info, format_time, get_system_info, time_function


class TestTimerFunctions(unittest.TestCase):
    """Test cases for timer utility functions."""

    def test_time_function(self):
        """Test that time_function correctly measures execution time."""
        def slow_function(duration):
            time.sleep(duration)
            return "result"

        result, duration = time_function(slow_function, 0.1)

        self.assertEqual(result, "result")
        self.assertGreaterEqual(duration, 0.09)  # Allow for small timing errors
        self.assertLessEqual(duration, 0.5)

    def test_format_time(self):
        """Test the format_time function with different time ranges."""
        self.assertIn("μs", format_time(0.0005))
        self.assertIn("ms", format_time(0.05))
        self.assertIn("s", format_time(5.0))
        self.assertIn("min", format_time(120.0))
        self.assertIn("hours", format_time(3600.0))

    def test_system_info(self):
        info = get_system_info()
        for key in ("cpu", "cores", "ram", "os", "python"):
            self.assertIn(key, info)
        self.assertIn("Python", format_system_info(info))


class TestHashing(unittest.TestCase):
    """Test cases for artifact hashes."""

    def test_known_digest(self):
        self.assertEqual(sha256_text(""),
                         "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        self.assertEqual(sha256_bytes([b"ab", b"c"]), sha256_bytes(b"abc"))

    def test_array_hash_ignores_input_dtype(self):
        ints = np.arange(6).reshape(2, 3)
        self.assertEqual(sha256_array(ints), sha256_array(ints.astype(np.float32)))
        self.assertNotEqual(sha256_array(ints), sha256_array(ints.T))

    def test_canonical_json(self):
        self.assertEqual(canonical_json({"b": 1, "a": [1, 2]}), '{"a":[1,2],"b":1}')


class TestLogging(unittest.TestCase):
    """Test cases for logging setup."""

    def tearDown(self):
        setup_logging(0)

    def test_levels(self):
        for verbosity, level in ((0, logging.WARNING), (1, logging.INFO), (2, logging.DEBUG), (5, logging.DEBUG)):
            with self.subTest(verbosity=verbosity):
                setup_logging(verbosity)
                self.assertEqual(logging.getLogger().level, level)


class TestPlotting(unittest.TestCase):
    """Figures are written to disk."""

    def test_confusion_and_latency_plots(self):
        with tempfile.TemporaryDirectory() as tmp:
            confusion_path = os.path.join(tmp, "confusion.png")
            plot_confusion_matrix(np.array([[3, 1], [0, 4]]), ["A", "B"], "Toy", confusion_path)
            latency_path = os.path.join(tmp, "latency.png")
            plot_latency(["TinyHAR", "SA-HAR"], [120.0, 480.0], [150.0, 600.0], "Latency", latency_path)
            self.assertGreater(os.path.getsize(confusion_path), 0)
            self.assertGreater(os.path.getsize(latency_path), 0)

    def test_empty_rows_are_not_divided(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "sparse.png")
            plot_confusion_matrix(np.array([[2, 0], [0, 0]]), ["A", "B"], "Sparse", path)
            self.assertTrue(os.path.exists(path))


if __name__ == '__main__':
    unittest.main()
