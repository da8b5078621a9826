"""
Evaluation Harness Module

Runs the experiment matrix on segmented trials:

- run_task: one split plan, one model, one modality (gesture recognition or
  user identification);
- run_modality_ablation: LOSO gesture recognition per modality, per subject;
- run_cross_stage: guided stages train, recall tests;
- run_userid_by_gesture: user identification on the full set and on each
  single-gesture subset.

Per fold: windows are cut (train and test overlaps differ), normalization is
fit on the training windows only, a fresh model is trained and window-level
and trial-level (majority vote) confusion matrices are collected.
"""
import contextlib
import logging
import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.data.domain import GestureClass, GestureTrial, Modality
from src.data.preprocess import (
    FeatureSequence,
    WindowConfig,
    WindowSet,
    build_sequences,
    windows_for,
    zscore_apply,
    zscore_fit,
)
from src.errors import ConfigError, DataError
from src.evaluation.metrics import MetricSummary, confusion_matrix
from src.evaluation.splits import (
    LeakageAudit,
    SplitPlan,
    audit_leakage,
    cross_stage_split,
    same_stage_split,
    loso_splits,
    stratified_kfold_by_trial,
)
from src.evaluation.training import TrainConfig, train_model
from src.models.builders import ModelSpec, build_model
from src.models.predict import majority_vote, predict_proba
from src.utils.timer import time_function

_logger = logging.getLogger(__name__)

ABLATION_MODALITIES = (Modality.EYE_HEAD, Modality.EYES, Modality.LEFT_EYE, Modality.RIGHT_EYE, Modality.HEAD)

_parallel_depth = 0


@contextlib.contextmanager
def parallel_section() -> Iterator[None]:
    """Marks fold-parallel evaluation as active in this process."""
    global _parallel_depth
    _parallel_depth += 1
    try:
        yield
    finally:
        _parallel_depth -= 1


def fold_parallel_active() -> bool:
    return _parallel_depth > 0


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    index: int
    test_subject: Optional[str]
    confusion: np.ndarray
    trial_confusion: np.ndarray
    train_windows: int
    test_windows: int
    test_trials: int
    train_seconds: float
    infer_seconds: float
    epochs: int
    stopped_early: bool

    @property
    def metrics(self) -> MetricSummary:
        return MetricSummary.of(self.confusion)

    @property
    def trial_metrics(self) -> MetricSummary:
        return MetricSummary.of(self.trial_confusion)

    @property
    def infer_ms_per_window(self) -> float:
        return 1000.0 * self.infer_seconds / max(1, self.test_windows)


@dataclass
class EvalReport:
    """Per-fold and aggregate results of one run_task call."""
    task: str
    protocol: str
    model: str
    modality: Modality
    class_names: List[str]
    folds: List[FoldResult]
    config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    audit: Optional[LeakageAudit] = None
    baseline: Optional["EvalReport"] = None

    def _mean(self, name: str, trial: bool = False) -> float:
        if not self.folds:
            return 0.0
        return float(np.mean([getattr(f.trial_metrics if trial else f.metrics, name) for f in self.folds]))

    @property
    def accuracy(self) -> float:
        return self._mean("accuracy")

    @property
    def macro_f1(self) -> float:
        return self._mean("macro_f1")

    @property
    def weighted_f1(self) -> float:
        return self._mean("weighted_f1")

    @property
    def trial_macro_f1(self) -> float:
        return self._mean("macro_f1", trial=True)

    @property
    def trial_accuracy(self) -> float:
        return self._mean("accuracy", trial=True)

    @property
    def pooled_confusion(self) -> np.ndarray:
        return np.sum([f.confusion for f in self.folds], axis=0)

    @property
    def train_seconds(self) -> float:
        return float(sum(f.train_seconds for f in self.folds))

    @property
    def infer_seconds(self) -> float:
        return float(sum(f.infer_seconds for f in self.folds))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task": self.task,
            "protocol": self.protocol,
            "model": self.model,
            "modality": self.modality.value,
            "classes": list(self.class_names),
            "seed": self.seed,
            "config": self.config,
            "aggregate": {"accuracy": self.accuracy, "macro_f1": self.macro_f1,
                          "weighted_f1": self.weighted_f1, "trial_accuracy": self.trial_accuracy,
                          "trial_macro_f1": self.trial_macro_f1},
            "folds": [
                {"index": f.index, "test_subject": f.test_subject, **f.metrics.to_dict(),
                 "trial_macro_f1": f.trial_metrics.macro_f1, "train_windows": f.train_windows,
                 "test_windows": f.test_windows, "train_seconds": f.train_seconds,
                 "infer_seconds": f.infer_seconds, "epochs": f.epochs,
                 "confusion": f.confusion.tolist()}
                for f in self.folds
            ],
            "leakage": self.audit.summary() if self.audit else None,
            "baseline": self.baseline.to_dict() if self.baseline else None,
        }


# ---------------------------------------------------------------------------
# Fold execution
# ---------------------------------------------------------------------------

@dataclass
class FoldJob:
    """Everything one worker needs to train and test one fold."""
    index: int
    test_subject: Optional[str]
    X_train: np.ndarray
    y_train: np.ndarray
    groups_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    groups_test: np.ndarray
    spec: ModelSpec
    train: TrainConfig
    num_classes: int


def run_fold(job: FoldJob) -> FoldResult:
    """Train a fresh model on one fold and score its test windows."""
    graph = build_model(job.spec)
    fit = train_model(graph, job.X_train, job.y_train, job.train, groups=job.groups_train)

    probs, infer_seconds = time_function(predict_proba, graph, job.X_test)
    predictions = np.argmax(probs, axis=1)
    confusion = confusion_matrix(job.y_test, predictions, job.num_classes)

    trial_true, trial_pred = [], []
    for trial_id in sorted(set(job.groups_test)):
        mask = job.groups_test == trial_id
        trial_true.append(int(job.y_test[mask][0]))
        trial_pred.append(majority_vote(probs[mask]))
    trial_confusion = confusion_matrix(trial_true, trial_pred, job.num_classes)

    result = FoldResult(job.index, job.test_subject, confusion, trial_confusion,
                        job.X_train.shape[0], job.X_test.shape[0], len(trial_true),
                        fit.seconds, infer_seconds, fit.epochs_run, fit.stopped_early)
    _logger.info("fold %d%s: macro F1 %.4f (trial %.4f), %d/%d windows",
                 job.index, f" [{job.test_subject}]" if job.test_subject else "",
                 result.metrics.macro_f1, result.trial_metrics.macro_f1,
                 result.train_windows, result.test_windows)
    return result


def _execute(jobs: List[FoldJob], workers: int) -> List[FoldResult]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_fold(job) for job in jobs]
    with parallel_section():
        with mp.Pool(processes=min(workers, len(jobs))) as pool:
            results = pool.map(run_fold, jobs)
    return sorted(results, key=lambda r: r.index)


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

def class_names_for(task: str, trials: Sequence[GestureTrial]) -> List[str]:
    """Gesture display names, or sorted subject ids for user identification."""
    if task == "gesture":
        return [g.display_name for g in GestureClass]
    if task == "userid":
        return sorted({t.participant_id for t in trials})
    raise ConfigError(f"unknown task {task!r}; valid tasks: gesture, userid")


def _permute_trial_labels(windows: WindowSet, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    trial_ids = sorted(set(windows.trial_id))
    label_of = {t: labels[windows.trial_id == t][0] for t in trial_ids}
    shuffled = rng.permutation([label_of[t] for t in trial_ids])
    lookup = dict(zip(trial_ids, shuffled))
    return np.array([lookup[t] for t in windows.trial_id], dtype=np.int64)


def run_task(trials: Sequence[GestureTrial], spec: ModelSpec, plan: SplitPlan,
             train: TrainConfig = TrainConfig(), window: WindowConfig = WindowConfig(),
             modality: Modality = Modality.EYE_HEAD, jobs: int = 1,
             permute_labels: bool = False) -> EvalReport:
    """
    Train and evaluate one model under a split plan.

    Args:
        trials: Segmented trials
        spec: Model to build per fold (shape fields are filled in here)
        plan: Folds over trial ids; plan.task selects the labels
        train: Training hyperparameters; fold f trains with seed train.seed + f
        window: Resampling, windowing and normalization settings
        modality: Feature subset
        jobs: Fold-level worker processes
        permute_labels: Shuffle training labels across trials (chance-level control)

    Returns:
        EvalReport with per-fold and mean-over-fold metrics

    Raises:
        DataError: on an empty fold or a class absent from every training fold
    """
    window.validate()
    train.validate()
    class_names = class_names_for(plan.task, trials)
    sequences = build_sequences(trials, modality, window)
    by_id: Dict[str, FeatureSequence] = {s.trial_id: s for s in sequences}
    W = window.effective_window
    rng = np.random.default_rng(train.seed)

    fold_jobs: List[FoldJob] = []
    trained_classes = set()
    for fold in plan.folds:
        if not fold.train_trials or not fold.test_trials:
            raise DataError(f"fold {fold.index} has an empty {'train' if not fold.train_trials else 'test'} set")
        try:
            train_ws = windows_for([by_id[t] for t in fold.train_trials], W, window.train_overlap)
            test_ws = windows_for([by_id[t] for t in fold.test_trials], W, window.test_overlap)
        except KeyError as e:
            raise DataError(f"fold {fold.index} names unknown trial {e.args[0]}") from None
        y_train = train_ws.labels(plan.task, class_names)
        y_test = test_ws.labels(plan.task, class_names)
        if permute_labels:
            y_train = _permute_trial_labels(train_ws, y_train, rng)
        trained_classes.update(int(c) for c in np.unique(y_train))

        X_train, X_test = train_ws.X, test_ws.X
        if window.normalize:
            stats = zscore_fit(X_train)
            X_train, X_test = zscore_apply(X_train, stats), zscore_apply(X_test, stats)

        fold_jobs.append(FoldJob(
            index=fold.index,
            test_subject=fold.test_subject,
            X_train=X_train, y_train=y_train, groups_train=train_ws.trial_id,
            X_test=X_test, y_test=y_test, groups_test=test_ws.trial_id,
            spec=ModelSpec(spec.name, W, modality.dim, len(class_names), spec.seed + fold.index,
                           dict(spec.hyperparameters)),
            train=train.with_seed(train.seed + fold.index),
            num_classes=len(class_names),
        ))

    present = {int(c) for job in fold_jobs for c in np.unique(job.y_test)}
    untrained = sorted(present - trained_classes)
    if untrained:
        names = ", ".join(class_names[c] for c in untrained)
        raise DataError(f"class(es) {names} missing from every training fold")

    audit = audit_leakage(plan, windows_for(sequences, W, window.train_overlap))
    _logger.info("%s / %s / %s / %s: %d folds, %s", plan.task, plan.protocol, spec.name, modality.value,
                 len(fold_jobs), audit.summary())
    folds = _execute(fold_jobs, jobs)

    config = {
        "model": spec.to_dict(),
        "train": train.to_dict(),
        "window": {**asdict(window), "effective_window": W},
        "modality": modality.value,
        "task": plan.task,
        "protocol": plan.protocol,
        "permute_labels": permute_labels,
        "plan_seed": plan.seed,
    }
    return EvalReport(plan.task, plan.protocol, spec.display_name, modality, class_names, folds,
                      config, train.seed, audit)


# ---------------------------------------------------------------------------
# Experiment matrix
# ---------------------------------------------------------------------------

@dataclass
class AblationTable:
    """Macro F1 per (modality, LOSO test subject)."""
    subjects: List[str]
    rows: List[Tuple[Modality, List[float]]]
    reports: List[EvalReport] = field(default_factory=list, repr=False)

    def row_average(self, modality: Modality) -> float:
        for m, scores in self.rows:
            if m == modality:
                return float(np.mean(scores))
        raise KeyError(modality)

    def column_averages(self) -> List[float]:
        """Per-subject mean over modalities, then the grand mean."""
        grid = np.array([scores for _, scores in self.rows])
        return [float(v) for v in grid.mean(axis=0)] + [float(grid.mean())]


def run_modality_ablation(trials: Sequence[GestureTrial], spec: ModelSpec, train: TrainConfig = TrainConfig(),
                          window: WindowConfig = WindowConfig(),
                          modalities: Sequence[Modality] = ABLATION_MODALITIES, jobs: int = 1) -> AblationTable:
    """LOSO gesture recognition once per modality, reported per test subject."""
    plan = loso_splits(trials, task="gesture")
    subjects = [f.test_subject for f in plan.folds]
    rows, reports = [], []
    for modality in modalities:
        report = run_task(trials, spec, plan, train, window, modality, jobs)
        by_subject = {f.test_subject: f.metrics.macro_f1 for f in report.folds}
        rows.append((modality, [by_subject[s] for s in subjects]))
        reports.append(report)
        print(f"  {modality.display_name:<10} macro F1 {report.macro_f1:.4f}")
    return AblationTable(subjects, rows, reports)


def run_cross_stage(trials: Sequence[GestureTrial], spec: ModelSpec, train: TrainConfig = TrainConfig(),
                    window: WindowConfig = WindowConfig(), modality: Modality = Modality.EYE_HEAD,
                    task: str = "gesture", baseline: bool = True, k: int = 4, seed: int = 0,
                    jobs: int = 1) -> EvalReport:
    """
    Train on Follow + Fixed + IRecall, test on Recall.

    With baseline, the same model and config are also scored by k-fold over
    the guided stages alone; that report hangs off ``report.baseline``.

    Raises:
        DataError: if a stage is missing
    """
    plan = cross_stage_split(trials, task=task)
    report = run_task(trials, spec, plan, train, window, modality)
    if baseline:
        guided_plan = same_stage_split(trials, k=k, seed=seed, task=task)
        guided = [t for t in trials if t.trial_id in guided_plan.subject_of]
        report.baseline = run_task(guided, spec, guided_plan, train, window, modality, jobs)
        _logger.info("cross-stage macro F1 %.4f, same-stage baseline %.4f",
                     report.macro_f1, report.baseline.macro_f1)
    return report


@dataclass
class UserIdRow:
    label: str
    gesture: Optional[GestureClass]
    trials: int
    report: EvalReport

    @property
    def accuracy(self) -> float:
        return self.report.accuracy

    @property
    def weighted_f1(self) -> float:
        return self.report.weighted_f1

    @property
    def macro_f1(self) -> float:
        return self.report.macro_f1


def run_userid_by_gesture(trials: Sequence[GestureTrial], spec: ModelSpec, train: TrainConfig = TrainConfig(),
                          window: WindowConfig = WindowConfig(), modality: Modality = Modality.EYE_HEAD,
                          k: int = 4, seed: int = 0, jobs: int = 1) -> List[UserIdRow]:
    """
    User identification with stratified k-fold on all trials, then on each
    single-gesture subset.
    """
    rows = []
    subsets: List[Tuple[str, Optional[GestureClass], List[GestureTrial]]] = [("all", None, list(trials))]
    for gesture in GestureClass:
        subset = [t for t in trials if t.gesture == gesture]
        if subset:
            subsets.append((gesture.display_name, gesture, subset))
    for label, gesture, subset in subsets:
        plan = stratified_kfold_by_trial(subset, k=k, seed=seed, task="userid")
        report = run_task(subset, spec, plan, train, window, modality, jobs)
        rows.append(UserIdRow(f"Auth ({label})", gesture, len(subset), report))
        print(f"  Auth ({label}): macro F1 {report.macro_f1:.4f}")
    return rows
