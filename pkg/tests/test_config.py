import os
import sys
import unittest
from pathlib import Path
from unittest.mock import patch

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import config
from config import find_state_dir, format_score, get_default_workers


class TestFormatScore(unittest.TestCase):
    def test_integral_values_are_short(self):
        """Test that exact scores print without trailing zeros"""
        self.assertEqual(format_score(1.0), "1")
        self.assertEqual(format_score(0.0), "0")

    def test_full_precision_roundtrips(self):
        for value in (2 / 3, 1e-17, 0.1 + 0.2, 123456.789):
            self.assertEqual(float(format_score(value)), value)

    def test_accepts_numpy_scalars(self):
        import numpy as np

        self.assertEqual(format_score(np.float64(0.5)), "0.5")


class TestDefaultWorkers(unittest.TestCase):
    def test_at_least_one(self):
        self.assertGreaterEqual(get_default_workers(), 1)

    @patch("os.cpu_count", return_value=None)
    def test_unknown_cpu_count(self, _):
        self.assertEqual(get_default_workers(), 1)


class TestStateDir(unittest.TestCase):
    def setUp(self):
        self.saved = (config.STATE_DIR, config.LOG_FILE)

    def tearDown(self):
        config.STATE_DIR, config.LOG_FILE = self.saved

    @patch.dict(os.environ, {"MULTIWALK_STATE_DIR": "/tmp/multiwalk-state"})
    def test_env_override(self):
        self.assertEqual(find_state_dir(), Path("/tmp/multiwalk-state").resolve())

    @patch.dict(os.environ, {}, clear=True)
    def test_default_under_cwd(self):
        self.assertEqual(find_state_dir(), Path.cwd().resolve() / ".multiwalk")

    def test_reconfigure_moves_log_file(self):
        config.reconfigure(Path("/tmp/elsewhere"))
        self.assertEqual(config.STATE_DIR, Path("/tmp/elsewhere").resolve())
        self.assertEqual(config.LOG_FILE, config.STATE_DIR / "multiwalk.log")


class TestConstants(unittest.TestCase):
    def test_walk_defaults_in_range(self):
        self.assertTrue(0 < config.DEFAULT_RESTART <= 1)
        self.assertTrue(0 <= config.DEFAULT_DELTA <= 1)
        self.assertIn(config.DEFAULT_SELF_LOOPS, config.SELF_LOOP_POLICIES)

    def test_silhouette_range_starts_at_two(self):
        low, high = config.SILHOUETTE_K_RANGE
        self.assertEqual(low, 2)
        self.assertGreater(high, low)


if __name__ == "__main__":
    unittest.main()
