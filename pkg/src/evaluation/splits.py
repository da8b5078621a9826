"""
Split Plans Module

Trial-level fold assignment:

- LOSO: one fold per subject, that subject's trials are the test set;
- stratified k-fold by trial: trials (never windows) are dealt into k folds
  balanced per subject, and per (subject, gesture) when every such stratum
  divides evenly by k;
- cross-stage: guided stages train, free recall tests;
- same-stage: stratified k-fold over the guided stages only, the baseline
  a cross-stage score is read against.

Windows inherit the fold of their trial, so a trial's windows can never land
on both sides of a split.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import LeaveOneGroupOut, StratifiedKFold
from typing_extensions import Literal, Protocol

from src.data.domain import Stage
from src.data.preprocess import WindowSet
from src.errors import DataError

_logger = logging.getLogger(__name__)

TaskName = Literal["gesture", "userid"]
ProtocolName = Literal["loso", "stratified", "cross_stage", "same_stage"]


class TrialLike(Protocol):
    """Anything carrying trial labels (GestureTrial, FeatureSequence)."""
    trial_id: str
    participant_id: str


@dataclass(frozen=True)
class Fold:
    index: int
    train_trials: Tuple[str, ...]
    test_trials: Tuple[str, ...]
    test_subject: Optional[str] = None


@dataclass
class SplitPlan:
    """Folds over trial ids for one task and protocol."""
    task: TaskName
    protocol: ProtocolName
    folds: List[Fold]
    subject_of: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.folds)

    def to_dict(self) -> Dict:
        return {
            "task": self.task,
            "protocol": self.protocol,
            "seed": self.seed,
            "folds": [{"index": f.index, "test_subject": f.test_subject,
                       "train": list(f.train_trials), "test": list(f.test_trials)} for f in self.folds],
        }


def _sorted_trials(trials: Sequence[TrialLike]) -> List[TrialLike]:
    ordered = sorted(trials, key=lambda t: t.trial_id)
    ids = [t.trial_id for t in ordered]
    if len(set(ids)) != len(ids):
        dupes = sorted(k for k, n in Counter(ids).items() if n > 1)
        raise DataError(f"duplicate trial ids: {dupes[:5]}")
    return ordered


def loso_splits(trials: Sequence[TrialLike], task: TaskName = "gesture") -> SplitPlan:
    """
    Leave-one-subject-out folds, ordered by subject id.

    Raises:
        DataError: with fewer than 2 subjects
    """
    ordered = _sorted_trials(trials)
    ids = np.array([t.trial_id for t in ordered], dtype=object)
    groups = np.array([t.participant_id for t in ordered], dtype=object)
    subjects = sorted(set(groups))
    if len(subjects) < 2:
        raise DataError(f"LOSO needs at least 2 subjects, got {len(subjects)}")

    folds = []
    for index, (train_idx, test_idx) in enumerate(LeaveOneGroupOut().split(ids, groups=groups)):
        test_subject = str(groups[test_idx[0]])
        folds.append(Fold(index, tuple(ids[train_idx]), tuple(ids[test_idx]), test_subject))
    _logger.info("LOSO plan: %d folds over %d trials", len(folds), len(ids))
    return SplitPlan(task, "loso", folds, dict(zip(ids, groups)))


def stratified_kfold_by_trial(trials: Sequence, k: int = 4, seed: int = 0,
                              task: TaskName = "userid") -> SplitPlan:
    """
    Stratified k-fold over whole trials.

    The stratification key is the subject; it is refined to
    (subject, gesture) when every such stratum has a multiple of k trials.
    Deterministic given seed.

    Raises:
        DataError: if any subject has fewer than k trials
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    ordered = _sorted_trials(trials)
    ids = np.array([t.trial_id for t in ordered], dtype=object)
    subjects = [t.participant_id for t in ordered]
    counts = Counter(subjects)
    small = sorted(s for s, n in counts.items() if n < k)
    if small:
        raise DataError(f"subjects with fewer than k={k} trials: {small}")

    combined = [f"{t.participant_id}|{int(t.gesture)}" for t in ordered]
    if all(n % k == 0 for n in Counter(combined).values()):
        strata = combined
    else:
        strata = subjects
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    folds = []
    for index, (train_idx, test_idx) in enumerate(splitter.split(np.zeros(len(ids)), strata)):
        folds.append(Fold(index, tuple(ids[train_idx]), tuple(ids[test_idx])))
    _logger.info("stratified %d-fold plan over %d trials (seed %d)", k, len(ids), seed)
    return SplitPlan(task, "stratified", folds, dict(zip(ids, subjects)), seed)


def fold_masks(plan_fold: Fold, trial_ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Boolean window masks (train, test) for an array of window trial ids."""
    train = np.isin(trial_ids, np.array(plan_fold.train_trials, dtype=object))
    test = np.isin(trial_ids, np.array(plan_fold.test_trials, dtype=object))
    return train, test


@dataclass
class LeakageAudit:
    """Findings of audit_leakage; empty lists mean no leakage."""
    folds_checked: int
    shared_trials: List[Tuple[int, str]] = field(default_factory=list)
    shared_subjects: List[Tuple[int, str]] = field(default_factory=list)
    split_windows: List[Tuple[int, str]] = field(default_factory=list)
    repeated_test_trials: List[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.shared_trials or self.shared_subjects or self.split_windows or self.repeated_test_trials)

    def summary(self) -> str:
        if self.clean:
            return f"no leakage across {self.folds_checked} folds"
        return (f"leakage: {len(self.shared_trials)} shared trials, {len(self.shared_subjects)} shared "
                f"LOSO subjects, {len(self.split_windows)} split trials, "
                f"{len(self.repeated_test_trials)} trials tested twice")


def audit_leakage(plan: SplitPlan, windows: Optional[WindowSet] = None) -> LeakageAudit:
    """
    Check a plan for train/test leakage. Never raises.

    Checks per fold: trial ids disjoint between train and test; for LOSO, the
    test subject absent from train; with windows, no trial contributing
    windows to both sides. Across folds for stratified and same-stage plans:
    every trial is tested exactly once.
    """
    audit = LeakageAudit(folds_checked=len(plan.folds))
    for fold in plan.folds:
        train, test = set(fold.train_trials), set(fold.test_trials)
        audit.shared_trials.extend((fold.index, t) for t in sorted(train & test))
        if plan.protocol == "loso" and fold.test_subject is not None:
            if any(plan.subject_of.get(t) == fold.test_subject for t in train):
                audit.shared_subjects.append((fold.index, fold.test_subject))
        if windows is not None and len(windows):
            train_mask, test_mask = fold_masks(fold, windows.trial_id)
            both = set(windows.trial_id[train_mask]) & set(windows.trial_id[test_mask])
            audit.split_windows.extend((fold.index, str(t)) for t in sorted(both))
    if plan.protocol in ("stratified", "same_stage"):
        tested = Counter(t for fold in plan.folds for t in fold.test_trials)
        audit.repeated_test_trials.extend(sorted(t for t, n in tested.items() if n > 1))
    if not audit.clean:
        _logger.warning("%s", audit.summary())
    return audit


CROSS_STAGE_TRAIN = (Stage.FOLLOW, Stage.FIXED, Stage.IRECALL)
CROSS_STAGE_TEST = Stage.RECALL


def cross_stage_split(trials: Sequence, task: TaskName = "gesture") -> SplitPlan:
    """
    One fold: train on Follow + Fixed + IRecall trials, test on Recall
    trials of the same subjects.

    Raises:
        DataError: if any of the four stages has no trials
    """
    ordered = _sorted_trials(trials)
    present = {t.stage for t in ordered}
    missing = [s.display_name for s in Stage if s not in present]
    if missing:
        raise DataError(f"cross-stage evaluation needs all four stages; missing: {', '.join(missing)}")
    train = tuple(t.trial_id for t in ordered if t.stage in CROSS_STAGE_TRAIN)
    test = tuple(t.trial_id for t in ordered if t.stage == CROSS_STAGE_TEST)
    subject_of = {t.trial_id: t.participant_id for t in ordered}
    return SplitPlan(task, "cross_stage", [Fold(0, train, test)], subject_of)


def same_stage_split(trials: Sequence, k: int = 4, seed: int = 0, task: TaskName = "gesture") -> SplitPlan:
    """
    Stratified k-fold by trial over the guided stages only.

    The baseline for cross_stage_split: same subjects, same training stages,
    but test trials drawn from those stages instead of Recall.

    Raises:
        DataError: if a guided stage has no trials, or as stratified_kfold_by_trial
    """
    guided = [t for t in trials if t.stage in CROSS_STAGE_TRAIN]
    present = {t.stage for t in guided}
    missing = [s.display_name for s in CROSS_STAGE_TRAIN if s not in present]
    if missing:
        raise DataError(f"same-stage baseline needs every guided stage; missing: {', '.join(missing)}")
    return replace(stratified_kfold_by_trial(guided, k=k, seed=seed, task=task), protocol="same_stage")
