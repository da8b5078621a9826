"""
Evaluation package: split plans, metrics, training, the experiment harness
and its report writers.

- splits: LOSO, stratified k-fold by trial, cross-stage plans and the leakage audit
- metrics: confusion matrices, accuracy, macro and weighted F1
- training: Adam training loop with early stopping
- harness: run_task and the experiment matrix built on it
- reports: text, CSV and PNG artifacts
"""
from src.evaluation.harness import (
    EvalReport,
    run_cross_stage,
    run_modality_ablation,
    run_task,
    run_userid_by_gesture,
)
from src.evaluation.metrics import accuracy, confusion_matrix, macro_f1, weighted_f1
from src.evaluation.splits import audit_leakage, cross_stage_split, loso_splits, stratified_kfold_by_trial
from src.evaluation.training import TrainConfig, train_model

__all__ = ["EvalReport", "TrainConfig", "accuracy", "audit_leakage", "confusion_matrix", "cross_stage_split",
           "loso_splits", "macro_f1", "run_cross_stage", "run_modality_ablation", "run_task",
           "run_userid_by_gesture", "stratified_kfold_by_trial", "train_model", "weighted_f1"]
