import unittest
import sys
import os
from collections import Counter

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.domain import GestureClass, Modality, Stage
from src.data.preprocess import build_sequences, windows_for
from src.errors import DataError
from src.evaluation.splits import (
    Fold,
    SplitPlan,
    audit_leakage,
    cross_stage_split,
    fold_masks,
    loso_splits,
    same_stage_split,
    stratified_kfold_by_trial,
)
from tests.fixtures import toy_trials


class TestLoso(unittest.TestCase):
    """Test cases for leave-one-subject-out plans."""

    def setUp(self):
        self.trials = toy_trials(subjects=("P0", "P1", "P2", "P3"), repetitions=1, frames=10)

    def test_one_fold_per_subject(self):
        plan = loso_splits(self.trials)
        self.assertEqual(len(plan), 4)
        self.assertEqual([f.test_subject for f in plan.folds], ["P0", "P1", "P2", "P3"])
        for fold in plan.folds:
            self.assertTrue(all(plan.subject_of[t] == fold.test_subject for t in fold.test_trials))
            self.assertFalse(any(plan.subject_of[t] == fold.test_subject for t in fold.train_trials))

    def test_test_sets_partition_trials(self):
        plan = loso_splits(self.trials)
        tested = [t for fold in plan.folds for t in fold.test_trials]
        self.assertEqual(sorted(tested), sorted(t.trial_id for t in self.trials))
        self.assertTrue(audit_leakage(plan).clean)

    def test_single_subject(self):
        with self.assertRaises(DataError):
            loso_splits(toy_trials(subjects=("P0",), repetitions=1, frames=10))

    def test_duplicate_trial_ids(self):
        with self.assertRaises(DataError):
            loso_splits(self.trials + self.trials[:1])


class TestStratified(unittest.TestCase):
    """Test cases for stratified k-fold over trials."""

    def setUp(self):
        # 4 subjects x 4 stages x 5 gestures x 3 reps = 60 trials per subject
        self.trials = toy_trials(subjects=("P0", "P1", "P2", "P3"), repetitions=3, frames=10)

    def test_balanced_subjects(self):
        plan = stratified_kfold_by_trial(self.trials, k=4, seed=0)
        self.assertEqual(len(plan), 4)
        for fold in plan.folds:
            counts = Counter(plan.subject_of[t] for t in fold.test_trials)
            self.assertEqual(counts, Counter({"P0": 15, "P1": 15, "P2": 15, "P3": 15}))

    def test_every_trial_tested_once(self):
        plan = stratified_kfold_by_trial(self.trials, k=4, seed=0)
        tested = Counter(t for fold in plan.folds for t in fold.test_trials)
        self.assertEqual(set(tested.values()), {1})
        self.assertEqual(len(tested), len(self.trials))
        self.assertTrue(audit_leakage(plan).clean)

    def test_deterministic_given_seed(self):
        first = stratified_kfold_by_trial(self.trials, k=4, seed=3).to_dict()
        second = stratified_kfold_by_trial(list(reversed(self.trials)), k=4, seed=3).to_dict()
        self.assertEqual(first, second)
        self.assertNotEqual(first, stratified_kfold_by_trial(self.trials, k=4, seed=4).to_dict())

    def test_small_stratum(self):
        # P3 keeps only its three Vertical/Follow trials
        few = [t for t in self.trials
               if t.participant_id != "P3" or (t.gesture is GestureClass.VERTICAL and t.stage is Stage.FOLLOW)]
        with self.assertRaises(DataError):
            stratified_kfold_by_trial(few, k=4)

    def test_windows_follow_their_trial(self):
        trials = toy_trials(subjects=("P0", "P1"), repetitions=2, frames=20)
        windows = windows_for(build_sequences(trials, Modality.HEAD), 32, 0.9)
        plan = stratified_kfold_by_trial(trials, k=4, seed=1)
        for fold in plan.folds:
            train, test = fold_masks(fold, windows.trial_id)
            self.assertFalse(np.any(train & test))
            self.assertFalse(set(windows.trial_id[train]) & set(windows.trial_id[test]))
        self.assertTrue(audit_leakage(plan, windows).clean)


class TestCrossStage(unittest.TestCase):
    """Test cases for the guided-to-free-recall split."""

    def test_stages_partition(self):
        trials = toy_trials(subjects=("P0", "P1"), repetitions=1, frames=10)
        plan = cross_stage_split(trials)
        fold = plan.folds[0]
        self.assertEqual(len(fold.test_trials), 2 * 5)
        self.assertEqual(len(fold.train_trials), 2 * 5 * 3)
        self.assertTrue(all("/RECALL/" in t for t in fold.test_trials))
        self.assertFalse(set(fold.train_trials) & set(fold.test_trials))

    def test_missing_recall(self):
        trials = [t for t in toy_trials(subjects=("P0",), repetitions=1, frames=10) if t.stage is not Stage.RECALL]
        with self.assertRaises(DataError) as ctx:
            cross_stage_split(trials)
        self.assertIn("Recall", str(ctx.exception))

    def test_same_stage_baseline(self):
        trials = toy_trials(subjects=("P0", "P1"), repetitions=1, frames=10)
        plan = same_stage_split(trials, k=3, seed=0)
        self.assertEqual(plan.protocol, "same_stage")
        tested = Counter(t for fold in plan.folds for t in fold.test_trials)
        self.assertEqual(len(tested), 2 * 5 * 3)
        self.assertEqual(set(tested.values()), {1})
        self.assertFalse(any("/RECALL/" in t for t in plan.subject_of))
        self.assertTrue(audit_leakage(plan).clean)

    def test_same_stage_needs_guided_stages(self):
        trials = [t for t in toy_trials(subjects=("P0", "P1"), repetitions=1, frames=10) if t.stage is not Stage.FIXED]
        with self.assertRaises(DataError):
            same_stage_split(trials)


class TestAudit(unittest.TestCase):
    """The audit reports planted leaks instead of raising."""

    def test_planted_leaks(self):
        plan = SplitPlan("gesture", "loso", [Fold(0, ("P0/V/FOLLOW/1", "P1/V/FOLLOW/1"),
                                                   ("P1/V/FOLLOW/1", "P1/H/FOLLOW/1"), "P1")],
                         {"P0/V/FOLLOW/1": "P0", "P1/V/FOLLOW/1": "P1", "P1/H/FOLLOW/1": "P1"})
        audit = audit_leakage(plan)
        self.assertFalse(audit.clean)
        self.assertEqual(audit.shared_trials, [(0, "P1/V/FOLLOW/1")])
        self.assertEqual(audit.shared_subjects, [(0, "P1")])
        self.assertIn("leakage", audit.summary())


if __name__ == '__main__':
    unittest.main()
