import unittest
import sys
import os

import numpy as np
from scipy.spatial.transform import Rotation

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.domain import (
    FrameSample,
    GestureClass,
    GestureTrial,
    Modality,
    Stage,
    Transform4,
    flatten_transform,
    unflatten_transform,
    validate_transform,
    yaw_pitch_from_rotation,
)


class TestTransforms(unittest.TestCase):
    """Test cases for transform flattening and validation."""

    def test_flatten_identity(self):
        """Identity flattens to the row-major identity vector."""
        expected = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]
        self.assertEqual(flatten_transform(Transform4.identity()).tolist(), expected)

    def test_flatten_translation_is_row_major(self):
        """Translation lands on indices 3, 7 and 11."""
        t = Transform4.from_parts(np.eye(3), [0.1, -0.2, 0.45])
        v = flatten_transform(t)
        self.assertEqual((v[3], v[7], v[11]), (0.1, -0.2, 0.45))
        np.testing.assert_array_equal(v[[0, 5, 10, 15]], np.ones(4))

    def test_flatten_round_trip_is_exact(self):
        """unflatten(flatten(t)) reproduces random rigid transforms bit for bit."""
        rng = np.random.default_rng(3)
        for seed in range(20):
            with self.subTest(seed=seed):
                rotation = Rotation.random(random_state=seed).as_matrix()
                t = Transform4.from_parts(rotation, rng.normal(size=3))
                self.assertEqual(unflatten_transform(flatten_transform(t)), t)

    def test_unflatten_rejects_wrong_length(self):
        with self.assertRaises(ValueError):
            unflatten_transform(np.zeros(15))

    def test_validate_identity(self):
        report = validate_transform(Transform4.identity(), tol=1e-6)
        self.assertTrue(report.passed)
        self.assertEqual(report.homogeneous_deviation, 0.0)
        self.assertEqual(report.orthonormality_residual, 0.0)

    def test_validate_bad_homogeneous_row(self):
        m = np.eye(4)
        m[3, 3] = 1.01
        report = validate_transform(Transform4(m), tol=1e-6)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.homogeneous_deviation, 0.01, places=12)

    def test_validate_scaled_rotation(self):
        """A rotation block scaled by 1.1 leaves 1.1^2 - 1 on the diagonal of R^T R."""
        m = np.eye(4)
        m[:3, :3] *= 1.1
        report = validate_transform(Transform4(m), tol=1e-6)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.orthonormality_residual, 0.21, places=12)

    def test_validate_rejects_non_positive_tol(self):
        with self.assertRaises(ValueError):
            validate_transform(Transform4.identity(), tol=0.0)

    def test_transform_requires_4x4(self):
        with self.assertRaises(ValueError):
            Transform4(np.eye(3))

    def test_yaw_pitch_recovery(self):
        """yaw/pitch come back from R_y(yaw) R_x(pitch)."""
        for yaw, pitch in [(0.0, 0.0), (0.3, -0.2), (-0.5, 0.4)]:
            with self.subTest(yaw=yaw, pitch=pitch):
                r = Rotation.from_euler("YX", [yaw, pitch]).as_matrix()
                got = yaw_pitch_from_rotation(r)
                self.assertAlmostEqual(got[0], yaw, places=12)
                self.assertAlmostEqual(got[1], pitch, places=12)


class TestEnumerations(unittest.TestCase):
    """Test cases for the closed label sets."""

    def test_gesture_codes_are_stable(self):
        self.assertEqual([int(g) for g in GestureClass], [0, 1, 2, 3, 4])
        self.assertEqual([g.token for g in GestureClass], ["V", "H", "L0", "L270", "Z0"])
        for g in GestureClass:
            self.assertIs(GestureClass.from_token(g.token), g)

    def test_stage_codes_are_stable(self):
        self.assertEqual([s.display_name for s in Stage], ["Follow", "Fixed", "IRecall", "Recall"])
        self.assertEqual([int(s) for s in Stage], [0, 1, 2, 3])
        self.assertIs(Stage.from_token("IRECALL"), Stage.IRECALL)
        with self.assertRaises(ValueError):
            Stage.from_token("LATER")

    def test_modality_dimensions(self):
        dims = {Modality.HEAD: 16, Modality.EYES: 32, Modality.LEFT_EYE: 16,
                Modality.RIGHT_EYE: 16, Modality.EYE_HEAD: 48}
        for modality, dim in dims.items():
            with self.subTest(modality=modality):
                self.assertEqual(modality.dim, dim)

    def test_modality_parse(self):
        self.assertIs(Modality.parse("Eye-Head"), Modality.EYE_HEAD)
        self.assertIs(Modality.parse("left_eye"), Modality.LEFT_EYE)
        with self.assertRaises(ValueError):
            Modality.parse("mouth")


class TestGestureTrial(unittest.TestCase):
    """Test cases for GestureTrial."""

    def _frames(self, n):
        identity = Transform4.identity()
        shifted = Transform4.from_parts(np.eye(3), [0.0, 0.0, 0.4])
        return tuple(FrameSample(i / 60.0, shifted, identity, identity) for i in range(n))

    def test_trial_id_and_channels(self):
        trial = GestureTrial("P1", GestureClass.L270, Stage.RECALL, 2, self._frames(5))
        self.assertEqual(trial.trial_id, "P1/L270/RECALL/2")
        matrix = trial.channel_matrix()
        self.assertEqual(matrix.shape, (5, 48))
        # head block is last
        self.assertEqual(matrix[0, 32 + 11], 0.4)
        self.assertEqual(matrix[0, 11], 0.0)

    def test_trial_rejects_empty_frames(self):
        with self.assertRaises(ValueError):
            GestureTrial("P1", GestureClass.VERTICAL, Stage.FOLLOW, 1, ())

    def test_trial_rejects_zero_repetition(self):
        with self.assertRaises(ValueError):
            GestureTrial("P1", GestureClass.VERTICAL, Stage.FOLLOW, 0, self._frames(3))


if __name__ == '__main__':
    unittest.main()
